#include "fspfm/tape.hpp"

#include "fspfm/error.hpp"

namespace fspfm {

const Tensor& Var::value() const {
    if (!tape_) fail(ErrorClass::contract, "use of an unbound Var");
    return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) fail(ErrorClass::numeric, "non-finite constant recorded");
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, std::string_view name) {
    const std::size_t index = store.index_of(name);
    const ParamEntry& entry = store.entries()[index];
    Node node;
    node.op = "param";
    node.value = entry.value;
    node.requires_grad = !entry.frozen;
    node.store = &store;
    node.store_index = index;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn fn) {
    if (backward_done_) fail(ErrorClass::contract, "tape already differentiated");
    if (!value.all_finite()) {
        fail(ErrorClass::numeric, "non-finite output from '" + std::string(op) + "'");
    }
    Node node;
    node.op = std::string(op);
    node.value = std::move(value);
    for (auto in : inputs) {
        if (in >= nodes_.size()) fail(ErrorClass::contract, "input refers to a future node");
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) fail(ErrorClass::contract, "loss belongs to another tape");
    if (backward_done_) fail(ErrorClass::contract, "backward called twice on one tape");
    if (loss.value().size() != 1) {
        fail(ErrorClass::contract, "backward needs a scalar loss, got shape " +
                                       shape_string(loss.value().shape()));
    }
    backward_done_ = true;

    for (std::size_t i = 0; i <= loss.id(); ++i) {
        if (nodes_[i].requires_grad) nodes_[i].grad = Tensor(nodes_[i].value.shape());
    }
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad[0] = 1.0;

    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        ++visits_;
        Node& node = nodes_[i];
        if (!node.requires_grad) continue;
        if (node.backward) {
            node.backward(*this, i);
        } else if (node.store) {
            auto& entry = node.store->entries()[node.store_index];
            if (!entry.frozen) {
                auto dst = entry.grad.data();
                auto src = node.grad.data();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
        }
    }
}

}  // namespace fspfm
