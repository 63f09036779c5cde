#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "seqdiff/tensor/tensor.hpp"

namespace seqdiff {

/// Tape of recorded operations for one forward pass.
///
/// Nodes are appended in execution order, which is a valid topological order;
/// backward() replays them in reverse. A graph is single-use: after backward()
/// it must be reset() before it can record or differentiate again.
template <typename T>
class Graph {
 public:
  enum class Mode { record, inference };

  struct Node {
    std::string op;
    std::vector<Tensor<T>> outputs;
    std::function<void()> backward;
  };

  explicit Graph(Mode mode = Mode::record) : mode_(mode) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  bool recording() const { return mode_ == Mode::record; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// True when an op over `inputs` must be taped.
  template <typename... Ts>
  bool tracks(const Ts&... inputs) const {
    return recording() && ((inputs.defined() && inputs.requires_grad()) || ...);
  }

  bool tracks_any(const std::vector<Tensor<T>>& inputs) const {
    if (!recording()) return false;
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) return true;
    }
    return false;
  }

  void record(std::string op, std::vector<Tensor<T>> outputs, std::function<void()> fn) {
    if (consumed_) throw GraphError("recording into a graph that already ran backward");
    nodes_.push_back(Node{std::move(op), std::move(outputs), std::move(fn)});
  }

  /// Accumulates d(loss)/d(leaf) into every reachable requires-grad leaf.
  void backward(Tensor<T> loss) {
    if (consumed_) throw GraphError("stale graph: backward already ran; call reset()");
    if (loss.size() != 1) {
      throw GraphError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw GraphError("loss does not depend on any tracked tensor");
    }
    consumed_ = true;
    loss.grad_buffer()[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      bool live = false;
      for (const auto& out : it->outputs) live = live || out.has_grad();
      if (live) it->backward();
    }
    // Drop saved activations; leaf gradients survive in the leaves.
    nodes_.clear();
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  Mode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace seqdiff
