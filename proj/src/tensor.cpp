#include "sqz/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sqz {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

TensorPtr tensor(std::vector<int64_t> shape, std::vector<double> data,
                 bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor: nonpositive dimension in shape " +
                                  shape_str(shape));
    }
  }
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument(
        "tensor: data length " + std::to_string(data.size()) +
        " does not match shape " + shape_str(shape));
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr zeros(std::vector<int64_t> shape, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)), 0.0);
  return tensor(std::move(shape), std::move(data), requires_grad);
}

TensorPtr full(std::vector<int64_t> shape, double value, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)), value);
  return tensor(std::move(shape), std::move(data), requires_grad);
}

TensorPtr scalar_tensor(double value, bool requires_grad) {
  return tensor({1}, {value}, requires_grad);
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(where) +
                                  ": non-finite value in tensor");
    }
  }
}

void Graph::backward(const TensorPtr& loss) {
  if (loss->numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss->shape));
  }
  loss->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
}

}  // namespace sqz
