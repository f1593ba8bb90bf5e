#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace unic::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Owns every trainable tensor of a model. Modules refer to parameters by
/// index, so copying a store (and the modules alongside it) is a deep copy.
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix value);

  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  std::optional<ParamId> find(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Parameter gradients aligned with a ParameterStore. An empty matrix stands
/// for an all-zero gradient.
using Gradients = std::vector<Matrix>;

/// acc += g, elementwise over blocks, treating empty blocks as zero.
void add_into(Gradients& acc, const Gradients& g);

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const noexcept { return tape != nullptr && id >= 0; }
};

/// Linear record of one forward pass. Nodes only ever reference earlier
/// nodes, so a reverse sweep is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  /// With record == false no backward closures are stored (inference).
  explicit Tape(const ParameterStore& params, bool record = true);

  Var parameter(ParamId id);
  Var constant(Matrix value);
  /// Leaf that receives a gradient, e.g. an input under test.
  Var variable(Matrix value);

  /// Appends a node. `fn` runs during backward() only if some input needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward fn);
  Var push(Matrix value, std::span<const Var> inputs, Backward fn);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Upstream gradient of a node (zero matrix of the value's shape when untouched).
  const Matrix& grad(int id);
  /// Gradient accumulator of an input; nullptr when that input needs no gradient.
  Matrix* grad_target(int id);

  /// Seeds d(out)/d(out) = 1 for a 1x1 node and sweeps backward.
  void backward(Var out);

  /// Adds parameter gradients from the last backward() into `into`.
  void accumulate(Gradients& into) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return record_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const ParameterStore* params_;
  bool record_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

// ---- operations ------------------------------------------------------------

Var matmul(Var a, Var b);
/// x * w + b with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a + row, row is 1 x cols.
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
Var gelu(Var a);
Var tanh(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Multi-head scaled dot-product self-attention over rows of q, k, v.
Var attention(Var q, Var k, Var v, int heads);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Row-major reinterpretation.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// out.flat[k] = a.flat[index[k]], or 0 where index[k] < 0.
Var remap(Var a, Eigen::Index rows, Eigen::Index cols, std::vector<int> index);
Var gather_rows(Var a, std::vector<int> rows);
Var mean_rows(Var a);
/// Row s of the result is the mean of a's rows listed in segments[s].
Var segment_mean(Var a, std::vector<std::vector<int>> segments);
/// Copies a and overwrites the listed rows with `row` (1 x cols).
Var replace_rows(Var a, Var row, std::vector<int> rows);
Var broadcast_rows(Var row, Eigen::Index n);
Var sum(Var a);
/// mean((pred - target)^2) over all elements; target is a constant.
Var mse(Var pred, const Matrix& target);

}  // namespace unic::ad
