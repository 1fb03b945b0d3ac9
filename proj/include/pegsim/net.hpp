#pragma once

#include <iosfwd>
#include <vector>

#include "pegsim/rng.hpp"
#include "pegsim/spatial.hpp"

namespace pegsim {

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

// Per-layer parameter gradients, in the same shapes as the network weights.
struct MlpGrads {
  std::vector<MatrixXd> w;
  std::vector<VectorXd> b;
};

// Adam moment estimates; one entry per layer.
struct AdamState {
  std::vector<MatrixXd> mw, vw;
  std::vector<VectorXd> mb, vb;
  long steps = 0;
};

// Fully connected network with ReLU hidden layers and a linear output,
// double precision throughout, with hand-derived backpropagation. Rows of
// the in/out matrices are batch samples.
class Mlp {
 public:
  Mlp() = default;
  // Hidden layers use fan-in scaled uniform init; the output layer starts
  // near zero (uniform +-3e-3) so policies begin close to centered.
  Mlp(int input, const std::vector<int>& hidden, int output, Rng& rng);

  struct Cache {
    std::vector<MatrixXd> inputs;  // layer inputs; inputs[0] is the batch
  };

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const;
  // grad_out = dL/dy, already including any batch averaging. Accumulates
  // parameter gradients into `grads` (if non-null) and returns dL/dx.
  MatrixXd backward(const Cache& cache, const MatrixXd& grad_out,
                    MlpGrads* grads) const;

  MlpGrads zero_grads() const;
  AdamState zero_adam() const;
  void adam_step(const MlpGrads& grads, AdamState& state, double lr);

  // Polyak averaging toward `src`: params = (1 - tau) * params + tau * src.
  void blend_from(const Mlp& src, double tau);

  int input_dim() const { return w_.empty() ? 0 : static_cast<int>(w_.front().cols()); }
  int output_dim() const { return w_.empty() ? 0 : static_cast<int>(w_.back().rows()); }
  int n_params() const;
  VectorXd flat_params() const;
  void set_flat_params(const VectorXd& p);

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::vector<MatrixXd> w_;  // w_[l]: rows = layer output, cols = layer input
  std::vector<VectorXd> b_;
};

// Gradients flattened in the same order as Mlp::flat_params, so entry k of
// the result differentiates with respect to parameter k.
VectorXd flat_grads(const MlpGrads& grads);

// Raw little-endian binary IO for checkpoints; doubles round-trip bit-exactly.
namespace bio {
void write_u32(std::ostream& out, uint32_t v);
uint32_t read_u32(std::istream& in);
void write_i64(std::ostream& out, int64_t v);
int64_t read_i64(std::istream& in);
void write_f64(std::ostream& out, double v);
double read_f64(std::istream& in);
void write_vec(std::ostream& out, const VectorXd& v);
VectorXd read_vec(std::istream& in);
}  // namespace bio

}  // namespace pegsim
