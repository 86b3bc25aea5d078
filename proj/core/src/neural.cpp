#include "guidance/neural.hpp"

#include <cstring>
#include <fstream>

#include "guidance/rng.hpp"

namespace guidance {

namespace {

void check_layout(const std::vector<int>& layer_dims) {
  if (layer_dims.size() < 2) throw ShapeMismatch("network needs at least input and output dims");
  for (int d : layer_dims) {
    if (d <= 0) throw ShapeMismatch("non-positive layer dimension");
  }
}

}  // namespace

NetworkParams make_network(const std::vector<int>& layer_dims) {
  check_layout(layer_dims);
  NetworkParams p;
  p.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    p.weights.emplace_back(Eigen::MatrixXd::Zero(layer_dims[l + 1], layer_dims[l]));
    p.biases.emplace_back(Eigen::VectorXd::Zero(layer_dims[l + 1]));
  }
  return p;
}

NetworkParams init_network(const std::vector<int>& layer_dims, std::uint64_t seed) {
  NetworkParams p = make_network(layer_dims);
  Rng rng(derive_seed(seed, stream::kWeightInit));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double bound = std::sqrt(6.0 / p.layer_dims[l]);
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) {
        p.weights[l](i, j) = rng.uniform(-bound, bound);
      }
    }
  }
  return p;
}

Normalizer fit_normalizer(const Eigen::MatrixXd& rows, double scale_floor) {
  if (rows.rows() == 0) throw EmptyDataset("fit_normalizer: no rows");
  const Eigen::Index n = rows.rows();
  Normalizer norm;
  norm.mean = rows.colwise().mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    var(j) = (rows.col(j).array() - norm.mean(j)).square().sum() / static_cast<double>(n);
  }
  norm.scale = var.cwiseSqrt().cwiseMax(scale_floor);
  return norm;
}

AdamState make_adam(const NetworkParams& params, double learning_rate) {
  AdamState a;
  a.learning_rate = learning_rate;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    a.m_w.emplace_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    a.v_w.emplace_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    a.m_b.emplace_back(Eigen::VectorXd::Zero(params.biases[l].size()));
    a.v_b.emplace_back(Eigen::VectorXd::Zero(params.biases[l].size()));
  }
  return a;
}

Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& input) {
  if (input.size() != params.input_dim()) throw ShapeMismatch("forward: input dimension");
  Eigen::VectorXd h = input;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    Eigen::VectorXd z = params.weights[l] * h + params.biases[l];
    if (l + 1 < params.layer_count()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != params.input_dim()) throw ShapeMismatch("forward_batch: input dimension");
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    Eigen::MatrixXd z = h * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (l + 1 < params.layer_count()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

std::pair<double, Gradient> mae_loss_and_gradient(const NetworkParams& params,
                                                  const Eigen::MatrixXd& inputs,
                                                  const Eigen::MatrixXd& targets) {
  if (inputs.rows() == 0) throw EmptyDataset("mae_loss_and_gradient: empty batch");
  if (inputs.cols() != params.input_dim() || targets.cols() != params.output_dim() ||
      inputs.rows() != targets.rows()) {
    throw ShapeMismatch("mae_loss_and_gradient: batch shape");
  }

  const std::size_t L = params.layer_count();
  std::vector<Eigen::MatrixXd> activations(L + 1);  // post-activation per layer
  activations[0] = inputs;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = activations[l] * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (l + 1 < L) z = z.cwiseMax(0.0);
    activations[l + 1] = std::move(z);
  }

  const Eigen::MatrixXd residual = activations[L] - targets;
  const double denom = static_cast<double>(residual.rows() * residual.cols());
  const double loss = residual.cwiseAbs().sum() / denom;

  Gradient grad;
  grad.w.resize(L);
  grad.b.resize(L);

  // d(loss)/d(prediction): sign of the residual, with sign(0) = 0.
  Eigen::MatrixXd delta =
      residual.unaryExpr([](double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }) / denom;

  for (std::size_t l = L; l-- > 0;) {
    grad.w[l].noalias() = delta.transpose() * activations[l];
    grad.b[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd upstream = delta * params.weights[l];
      // ReLU subgradient: active where the post-activation is positive.
      delta = upstream.cwiseProduct(
          activations[l].unaryExpr([](double a) { return a > 0.0 ? 1.0 : 0.0; }));
    }
  }
  return {loss, std::move(grad)};
}

void adam_step(NetworkParams& params, AdamState& adam, const Gradient& gradient) {
  if (gradient.w.size() != params.weights.size()) throw ShapeMismatch("adam_step: layer count");
  adam.step += 1;
  const double b1t = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double b2t = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam.m_w[l] = adam.beta1 * adam.m_w[l] + (1.0 - adam.beta1) * gradient.w[l];
    adam.v_w[l] = adam.beta2 * adam.v_w[l] + (1.0 - adam.beta2) * gradient.w[l].cwiseAbs2();
    adam.m_b[l] = adam.beta1 * adam.m_b[l] + (1.0 - adam.beta1) * gradient.b[l];
    adam.v_b[l] = adam.beta2 * adam.v_b[l] + (1.0 - adam.beta2) * gradient.b[l].cwiseAbs2();

    const Eigen::MatrixXd mw_hat = adam.m_w[l] / b1t;
    const Eigen::MatrixXd vw_hat = adam.v_w[l] / b2t;
    params.weights[l].array() -=
        adam.learning_rate * mw_hat.array() / (vw_hat.array().sqrt() + adam.epsilon);

    const Eigen::VectorXd mb_hat = adam.m_b[l] / b1t;
    const Eigen::VectorXd vb_hat = adam.v_b[l] / b2t;
    params.biases[l].array() -=
        adam.learning_rate * mb_hat.array() / (vb_hat.array().sqrt() + adam.epsilon);
  }
}

Prediction predict_next(const NetworkParams& params, const Normalization& norm,
                        const Eigen::Vector2d& q, const Eigen::Vector2d& q_dot,
                        const Eigen::VectorXd& raw_input, double dt) {
  const Eigen::VectorXd out = forward(params, norm.input.normalize(raw_input));
  Prediction p;
  p.q_ddot = norm.target.denormalize(out);
  p.q_next = q + q_dot * dt;
  p.q_dot_next = q_dot + p.q_ddot * dt;
  return p;
}

namespace {

constexpr char kMagic[8] = {'N', 'D', 'M', 'O', 'D', 'E', 'L', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw CorruptFile("unexpected end of file");
}

void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, sizeof v); }
void write_i64(std::ostream& os, std::int64_t v) { write_bytes(os, &v, sizeof v); }
void write_f64(std::ostream& os, double v) { write_bytes(os, &v, sizeof v); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  read_bytes(is, &v, sizeof v);
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v;
  read_bytes(is, &v, sizeof v);
  return v;
}
double read_f64(std::istream& is) {
  double v;
  read_bytes(is, &v, sizeof v);
  return v;
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  // Row-major element order.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
  }
}

void read_matrix(std::istream& is, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(is);
  }
}

void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(os, v(i));
}

void read_vector(std::istream& is, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = read_f64(is);
}

}  // namespace

void save_params(const std::string& path, const ModelBundle& bundle) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptFile("cannot open for writing: " + path);

  write_bytes(os, kMagic, sizeof kMagic);
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<std::uint32_t>(bundle.params.layer_dims.size()));
  for (int d : bundle.params.layer_dims) write_u32(os, static_cast<std::uint32_t>(d));

  for (std::size_t l = 0; l < bundle.params.layer_count(); ++l) {
    write_matrix(os, bundle.params.weights[l]);
    write_vector(os, bundle.params.biases[l]);
  }

  write_u32(os, static_cast<std::uint32_t>(bundle.norm.input.dim()));
  write_vector(os, bundle.norm.input.mean);
  write_vector(os, bundle.norm.input.scale);
  write_u32(os, static_cast<std::uint32_t>(bundle.norm.target.dim()));
  write_vector(os, bundle.norm.target.mean);
  write_vector(os, bundle.norm.target.scale);

  write_i64(os, bundle.adam.step);
  write_f64(os, bundle.adam.beta1);
  write_f64(os, bundle.adam.beta2);
  write_f64(os, bundle.adam.epsilon);
  write_f64(os, bundle.adam.learning_rate);
  for (std::size_t l = 0; l < bundle.params.layer_count(); ++l) {
    write_matrix(os, bundle.adam.m_w[l]);
    write_matrix(os, bundle.adam.v_w[l]);
    write_vector(os, bundle.adam.m_b[l]);
    write_vector(os, bundle.adam.v_b[l]);
  }
  if (!os) throw CorruptFile("write failure: " + path);
}

ModelBundle load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFile("cannot open: " + path);

  char magic[8];
  read_bytes(is, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw VersionMismatch("bad magic in " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kFormatVersion) {
    throw VersionMismatch("unsupported weight file version " + std::to_string(version));
  }

  const std::uint32_t n_dims = read_u32(is);
  if (n_dims < 2 || n_dims > 64) throw CorruptFile("implausible layer count");
  std::vector<int> dims(n_dims);
  for (auto& d : dims) d = static_cast<int>(read_u32(is));

  ModelBundle bundle;
  bundle.params = make_network(dims);
  for (std::size_t l = 0; l < bundle.params.layer_count(); ++l) {
    read_matrix(is, bundle.params.weights[l]);
    read_vector(is, bundle.params.biases[l]);
  }

  const std::uint32_t in_dim = read_u32(is);
  bundle.norm.input.mean.resize(in_dim);
  bundle.norm.input.scale.resize(in_dim);
  read_vector(is, bundle.norm.input.mean);
  read_vector(is, bundle.norm.input.scale);
  const std::uint32_t out_dim = read_u32(is);
  bundle.norm.target.mean.resize(out_dim);
  bundle.norm.target.scale.resize(out_dim);
  read_vector(is, bundle.norm.target.mean);
  read_vector(is, bundle.norm.target.scale);

  bundle.adam = make_adam(bundle.params);
  bundle.adam.step = read_i64(is);
  bundle.adam.beta1 = read_f64(is);
  bundle.adam.beta2 = read_f64(is);
  bundle.adam.epsilon = read_f64(is);
  bundle.adam.learning_rate = read_f64(is);
  for (std::size_t l = 0; l < bundle.params.layer_count(); ++l) {
    read_matrix(is, bundle.adam.m_w[l]);
    read_matrix(is, bundle.adam.v_w[l]);
    read_vector(is, bundle.adam.m_b[l]);
    read_vector(is, bundle.adam.v_b[l]);
  }
  // Must be exactly at end of file.
  is.peek();
  if (!is.eof()) throw CorruptFile("trailing bytes in " + path);
  return bundle;
}

}  // namespace guidance
