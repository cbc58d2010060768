#include "ssu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ssu {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw UsageError("uniform_int: n must be positive");
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

double Rng::normal() {
  // One normal per call; the sine partner is discarded to keep the stream
  // layout independent of call history.
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Rng Rng::split(std::uint64_t tag) const {
  std::uint64_t child = mix64(seed_ ^ mix64(tag + 0x632be59bd9b4e019ull));
  return Rng(child);
}

Rng Rng::split(const std::string& tag) const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return split(h);
}

namespace detail {

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), real(0));
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<real> data) {
  auto node = std::make_shared<detail::Node>();
  if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
    throw UsageError("tensor data length does not match shape " +
                     shape_str(shape));
  }
  node->shape = std::move(shape);
  node->value = std::move(data);
  return node;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<real> data(static_cast<size_t>(numel(shape)), real(0));
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, real fill, bool requires_grad) {
  std::vector<real> data(static_cast<size_t>(numel(shape)), fill);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data,
                         bool requires_grad) {
  Tensor t(new_node(std::move(shape), std::move(data)));
  t.node_->requires_grad = requires_grad;
  t.node_->is_leaf = true;
  return t;
}

Tensor Tensor::scalar(real v) { return from_data({1}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
std::int64_t Tensor::size() const { return static_cast<std::int64_t>(node_->value.size()); }

real* Tensor::data() { return node_->value.data(); }
const real* Tensor::data() const { return node_->value.data(); }

real Tensor::at(std::initializer_list<int> idx) const {
  return const_cast<Tensor*>(this)->at_mut(idx);
}

real& Tensor::at_mut(std::initializer_list<int> idx) {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) throw UsageError("tensor index rank mismatch");
  std::int64_t off = 0;
  size_t k = 0;
  for (int i : idx) {
    off = off * s[k] + i;
    ++k;
  }
  return node_->value[static_cast<size_t>(off)];
}

real Tensor::item() const {
  if (size() != 1) throw UsageError("item() requires a scalar tensor");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  if (flag) node_->is_leaf = true;
  return *this;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

real* Tensor::grad_data() {
  node_->ensure_grad();
  return node_->grad.data();
}

const real* Tensor::grad_data() const {
  node_->ensure_grad();
  return node_->grad.data();
}

Tensor Tensor::grad() const {
  node_->ensure_grad();
  return Tensor::from_data(node_->shape, node_->grad);
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), real(0));
}

Tensor Tensor::clone() const {
  return Tensor::from_data(node_->shape, node_->value, false);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;  // copy of values, no graph links
  return Tensor(std::move(node));
}

void Tensor::backward() {
  if (!node_) throw UsageError("backward on an undefined tensor");
  if (size() != 1) throw UsageError("backward requires a scalar output");
  if (node_->is_leaf && node_->requires_grad) {
    node_->ensure_grad();
    node_->grad[0] += real(1);
    return;
  }
  if (!node_->requires_grad) {
    throw UsageError("backward on a tensor with no gradient-tracked inputs");
  }
  if (!node_->backward_fn && node_->parents.empty()) {
    throw UsageError("backward on a graph whose intermediates were freed");
  }

  // Iterative post-order DFS: children visited before parents, so the
  // reversed order is a valid reverse-topological schedule. The order holds
  // owning pointers; intermediates are kept alive even as parent links are
  // released during the walk.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    std::shared_ptr<detail::Node> node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_, 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      const std::shared_ptr<detail::Node>& p = f.node->parents[f.next_parent++];
      if (visited.insert(p.get()).second) stack.push_back({p, 0});
    } else {
      order.push_back(std::move(f.node));
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = it->get();
    if (n->backward_fn) {
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      n->backward_fn(*n);
      n->backward_fn = nullptr;  // free saved state; re-backward is an error
      n->parents.clear();
    }
  }
}

namespace detail {

Tensor make_op(Shape shape, std::vector<real> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(value));
  bool track = grad_enabled();
  bool any_grad = false;
  if (track) {
    for (const Tensor& p : parents) {
      if (p.requires_grad()) {
        any_grad = true;
        break;
      }
    }
  }
  if (track && any_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace ssu
