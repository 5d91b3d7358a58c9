#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "fspfm/param_store.hpp"
#include "fspfm/tensor.hpp"

namespace fspfm {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only record of one forward pass. Nodes are stored in creation order,
/// which is a valid topological order, and `backward` walks it once in reverse.
///
/// Parameters enter the tape through `param`; after `backward`, the node
/// gradient of each non-frozen parameter is added to its ParamStore
/// accumulator. Frozen parameters and constants do not require gradient, so
/// nothing upstream of them is computed.
class Tape {
public:
    /// Receives the tape and the id of the node being differentiated; reads
    /// `grad(node)` and accumulates into the gradients of its inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var param(ParamStore& store, std::string_view name);

    /// Records a primitive. `requires_grad` of the new node is the OR over its
    /// inputs; `fn` is only invoked when that is true.
    Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
               BackwardFn fn);

    void backward(Var loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    Tensor& grad(std::size_t id) { return nodes_[id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t backward_visits() const noexcept { return visits_; }

    /// Smallest |pre-activation| seen by any relu on this tape; finite
    /// difference checks use it to stay away from the kink.
    double min_relu_margin() const noexcept { return min_relu_margin_; }
    void note_relu_margin(double margin) {
        if (margin < min_relu_margin_) min_relu_margin_ = margin;
    }

    Var var(std::size_t id) { return Var(this, id); }

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        ParamStore* store = nullptr;
        std::size_t store_index = 0;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    std::size_t visits_ = 0;
    double min_relu_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace fspfm
