#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sqz {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of 64-bit reals with an optional gradient slot.
// Values are immutable after construction except for gradient accumulation.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until ensure_grad() is called

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }

  // Negative indices count from the back.
  int64_t dim(int i) const {
    if (i < 0) i += ndim();
    return shape[static_cast<size_t>(i)];
  }

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }

  bool has_grad() const { return !grad.empty(); }
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

TensorPtr tensor(std::vector<int64_t> shape, std::vector<double> data,
                 bool requires_grad = false);
TensorPtr zeros(std::vector<int64_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<int64_t> shape, double value, bool requires_grad = false);
TensorPtr scalar_tensor(double value, bool requires_grad = false);

// Throws std::invalid_argument if any entry is NaN or infinite.
void check_finite(const Tensor& t, const char* where);

// Tape of recorded operations in execution order. Ops append one node each;
// backward() seeds the loss gradient with 1 and replays the closures in
// reverse, visiting every node exactly once. Inputs of a node always precede
// it, so each tensor's adjoint is complete before its producer runs.
//
// The graph is built and traversed by a single thread; parallelism lives
// inside the kernels an op calls.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(const char* op, std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(backward)});
  }

  // loss must be a scalar (numel == 1). Parameters not reachable from the
  // loss simply keep a zero (or never-allocated) gradient.
  void backward(const TensorPtr& loss);

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace sqz
