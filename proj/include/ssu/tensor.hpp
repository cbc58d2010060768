#ifndef SSU_TENSOR_HPP_
#define SSU_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "ssu/errors.hpp"

namespace ssu {

// Model state is float32; defining SSU_REAL64 switches the whole library to
// double for finite-difference gradient checks.
#ifdef SSU_REAL64
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Deterministic counter-based stream (splitmix64). Substreams derived via
// split() depend only on the root seed and the tag path, never on how much
// of the parent stream has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                  // [0, 1)
  double uniform(double lo, double hi);
  int uniform_int(int n);            // [0, n)
  double normal();                   // standard normal, Box-Muller

  Rng split(std::uint64_t tag) const;
  Rng split(const std::string& tag) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad. Released after the
  // backward pass frees the graph.
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

}  // namespace detail

// Dense N-d array with optional reverse-mode gradient tracking. Copies are
// shallow (shared storage); use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real fill, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int ndim() const;
  std::int64_t size() const;

  real* data();
  const real* data() const;
  real at(std::initializer_list<int> idx) const;
  real& at_mut(std::initializer_list<int> idx);
  real item() const;  // requires size() == 1

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  real* grad_data();
  const real* grad_data() const;
  Tensor grad() const;  // copy of the grad buffer as a plain tensor
  void zero_grad();

  Tensor clone() const;   // deep copy, no graph
  Tensor detach() const;  // shares storage, no graph

  // Reverse-mode pass from a scalar output. Frees the graph as it goes;
  // calling backward twice on the same graph is a usage error.
  void backward();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// RAII switch disabling graph construction (inference / data paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

namespace detail {

// Builds a result node wired into the graph when gradients are enabled and
// any parent requires them.
Tensor make_op(Shape shape, std::vector<real> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn);

}  // namespace detail

}  // namespace ssu

#endif  // SSU_TENSOR_HPP_
