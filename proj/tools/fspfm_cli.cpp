// fspfm: command-line driver for the two-stage pipeline.
//
//   fspfm gen-data  --out DIR           synthetic dataset
//   fspfm pretrain  --out DIR           stage-1 checkpoint
//   fspfm finetune  --out DIR           stage-2 checkpoint
//   fspfm eval      --out DIR           verification report
//   fspfm ablate    --out DIR           five-row ablation table
//   fspfm gradcheck [--out DIR]         finite-difference suite
//
// Every subcommand accepts --config PATH, --seed N and --overwrite. Failures
// print one line `error: <class>: <message>` to stderr and exit with status 2.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fspfm/checkpoint.hpp"
#include "fspfm/config.hpp"
#include "fspfm/error.hpp"
#include "fspfm/eval.hpp"
#include "fspfm/gradcheck.hpp"
#include "fspfm/io.hpp"
#include "fspfm/pipeline.hpp"
#include "fspfm/synth.hpp"
#include "fspfm/training.hpp"

namespace fs = std::filesystem;
using namespace fspfm;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    bool overwrite = false;
};

struct Layout {
    fs::path root;
    fs::path dataset() const { return root / "dataset.bin"; }
    fs::path stage1() const { return root / "stage1.ckpt"; }
    fs::path stage2() const { return root / "stage2.ckpt"; }
    fs::path report_kv() const { return root / "report.kv"; }
    fs::path report_txt() const { return root / "report.txt"; }
    fs::path ablation_dir() const { return root / "ablation"; }
    fs::path gradcheck() const { return root / "gradcheck.txt"; }
    fs::path manifest() const { return root / "manifest.jsonl"; }
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("fspfm");
    logger->set_pattern("[%H:%M:%S] %l: %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("FSPFM_LOG")) {
        const std::string level = env;
        if (level == "error") spdlog::set_level(spdlog::level::err);
        else if (level == "info") spdlog::set_level(spdlog::level::info);
        else if (level == "debug") spdlog::set_level(spdlog::level::debug);
        else fail(ErrorClass::config, "FSPFM_LOG must be error, info or debug (got '" + level + "')");
    }
}

RunConfig load_config(const Options& o) {
    RunConfig c = o.config_path.empty() ? parse_config_text("", "<defaults>") : parse_config(o.config_path);
    if (o.seed) {
        c.train.seed = *o.seed;
        c.finalize();
    }
    return c;
}

void require(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) fail(ErrorClass::dependency, "missing " + what + ": " + p.string());
}

void claim(const fs::path& p, const Options& o) {
    if (fs::exists(p) && !o.overwrite) {
        fail(ErrorClass::exists, p.string() + " already exists (pass --overwrite to replace it)");
    }
}

DataSplit load_split(const Layout& l, const RunConfig& c) {
    require(l.dataset(), "dataset (run gen-data first)");
    const LoadedDataset data = load_dataset(l.dataset());
    if (data.spec.num_identities != c.data.num_identities) {
        fail(ErrorClass::config, "dataset holds " + std::to_string(data.spec.num_identities) +
                                     " identities but the config expects " +
                                     std::to_string(c.data.num_identities));
    }
    return split_dataset(data.samples, c);
}

void write_text(const fs::path& p, const std::string& text, const Options& o) {
    claim(p, o);
    io::write_file_atomic(p, std::string_view(text));
}

void record(const Layout& l, const std::string& stage, const fs::path& artifact, const RunConfig& c) {
    Manifest(l.manifest()).record(stage, artifact, train_config_digest(c.train), c.train.seed);
}

int cmd_gen_data(const Options& o) {
    const RunConfig c = load_config(o);
    const Layout l{o.out};
    claim(l.dataset(), o);
    spdlog::info("generating {} identities x {} samples", c.data.num_identities, c.data.samples_per_identity);
    save_dataset(make_dataset(c.data), c.data, l.dataset());
    record(l, "gen-data", l.dataset(), c);
    spdlog::info("wrote {}", l.dataset().string());
    return 0;
}

int cmd_pretrain(const Options& o) {
    const RunConfig c = load_config(o);
    const Layout l{o.out};
    const DataSplit split = load_split(l, c);
    claim(l.stage1(), o);
    spdlog::info("pre-training on {} samples", split.train.size());
    const TrainResult r = pretrain(split.train, c.train);
    for (const auto& e : r.history) {
        spdlog::debug("epoch {} lr {:.6g} arcface {:.6f}", e.epoch, e.lr, e.mean_arcface);
    }
    save_checkpoint(r.checkpoint, l.stage1());
    record(l, "pretrain", l.stage1(), c);
    spdlog::info("wrote {} (final loss {:.4f})", l.stage1().string(), r.history.back().mean_arcface);
    return 0;
}

int cmd_finetune(const Options& o) {
    const RunConfig c = load_config(o);
    const Layout l{o.out};
    const DataSplit split = load_split(l, c);
    require(l.stage1(), "stage-1 checkpoint (run pretrain first)");
    claim(l.stage2(), o);
    const Checkpoint stage1 = load_checkpoint(l.stage1());
    const PairSet pairs = make_finetune_pairs(split.train, c.train.finetune.min_profile_angle);
    spdlog::info("fine-tuning on {} pairs", pairs.size());
    TwinNets nets = clone_nets(stage1, c.train);
    const TrainResult r = finetune(nets, split.train, pairs, c.train, [](const EpochStats& e, const TwinNets&) {
        spdlog::debug("epoch {} total {:.6f} arcface {:.6f} ada {:.6f}", e.epoch, e.mean_total, e.mean_arcface,
                      e.mean_ada);
    });
    save_checkpoint(r.checkpoint, l.stage2());
    record(l, "finetune", l.stage2(), c);
    spdlog::info("wrote {} (final ada {:.4f})", l.stage2().string(), r.history.back().mean_ada);
    return 0;
}

int cmd_eval(const Options& o) {
    const RunConfig c = load_config(o);
    const Layout l{o.out};
    const DataSplit split = load_split(l, c);
    require(l.stage2(), "stage-2 checkpoint (run finetune first)");
    claim(l.report_kv(), o);
    claim(l.report_txt(), o);
    const Checkpoint ckpt = load_checkpoint(l.stage2());
    const AblationArm arm = ablation_arms().back();
    const EvalPairs pairs = make_eval_pairs(split.eval, c.eval.pairs, c.eval.pair_seed);
    const std::vector<AblationRow> rows = {evaluate_checkpoint(arm, ckpt, c.train, split.eval, pairs, c.eval.pair_seed)};
    write_text(l.report_kv(), render_report_kv(rows), o);
    write_text(l.report_txt(), render_report_table(rows), o);
    record(l, "eval", l.report_kv(), c);
    record(l, "eval", l.report_txt(), c);
    std::cout << render_report_table(rows);
    return 0;
}

int cmd_ablate(const Options& o) {
    const RunConfig c = load_config(o);
    const Layout l{o.out};
    const fs::path kv = l.ablation_dir() / "report.kv";
    const fs::path txt = l.ablation_dir() / "report.txt";
    auto ckpt_path = [&](const AblationArm& arm) {
        // "+FT+ADA" -> "ft_ada"
        std::string name;
        for (char ch : arm.name) {
            if (ch == '+') {
                if (!name.empty()) name += '_';
            } else {
                name += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            }
        }
        return l.ablation_dir() / (name + ".ckpt");
    };
    for (const auto& arm : ablation_arms()) claim(ckpt_path(arm), o);
    claim(kv, o);
    claim(txt, o);

    const AblationRun run = run_ablation(c, [](const std::string& line) { spdlog::info("{}", line); });
    for (const auto& a : run.arms) {
        save_checkpoint(a.checkpoint, ckpt_path(a.arm));
        record(l, "ablate", ckpt_path(a.arm), c);
    }
    const auto rows = run.rows();
    write_text(kv, render_report_kv(rows), o);
    write_text(txt, render_report_table(rows), o);
    record(l, "ablate", kv, c);
    record(l, "ablate", txt, c);
    std::cout << render_report_table(rows);
    return 0;
}

int cmd_gradcheck(const Options& o, bool out_given) {
    const RunConfig c = load_config(o);
    GradcheckOptions g;
    g.dims = c.train.dims;
    g.seed = c.train.seed;
    g.arcface_scale = c.train.arcface_scale;
    g.arcface_margin = c.train.arcface_margin;
    g.lambda = c.train.finetune.lambda;
    const GradcheckReport r = gradcheck_all(g);
    std::cout << r.render();
    if (out_given) {
        const Layout l{o.out};
        write_text(l.gradcheck(), r.render(), o);
        record(l, "gradcheck", l.gradcheck(), c);
    }
    if (!r.pass()) {
        std::string names;
        for (const auto& n : r.failing()) names += (names.empty() ? "" : ", ") + n;
        fail(ErrorClass::numeric, "gradient check failed for: " + names);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-space pose frontalization: data, training, evaluation"};
    app.require_subcommand(1);
    Options o;
    bool out_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "run seed (overrides the config)");
        sub->add_option("--out", o.out, "artifact directory")->each([&](const std::string&) { out_given = true; });
        sub->add_flag("--overwrite", o.overwrite, "replace existing artifacts");
    };
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    auto* pre = app.add_subcommand("pretrain", "stage 1: extractor + FSPFM + head");
    auto* fin = app.add_subcommand("finetune", "stage 2: P-Net FSPFM and F-Net attention");
    auto* ev = app.add_subcommand("eval", "verify the stage-2 checkpoint on held-out identities");
    auto* abl = app.add_subcommand("ablate", "train and score all five ablation rows");
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every trainable composite");
    for (auto* s : {gen, pre, fin, ev, abl, gc}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        setup_logging();
        if (*gen) return cmd_gen_data(o);
        if (*pre) return cmd_pretrain(o);
        if (*fin) return cmd_finetune(o);
        if (*ev) return cmd_eval(o);
        if (*abl) return cmd_ablate(o);
        if (*gc) return cmd_gradcheck(o, out_given);
    } catch (const Error& e) {
        std::cerr << "error: " << error_class_name(e.error_class()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
