#include "fracpinn/network.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "fracpinn/errors.hpp"

namespace fracpinn {

int Network::parameter_count() const {
  int count = 1;
  for (std::size_t l = 0; l < weights.size(); ++l)
    count += static_cast<int>(weights[l].size() + biases[l].size());
  return count;
}

Eigen::VectorXd Network::flatten() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) p(at++) = W(r, c);
    p.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  p(at) = slope;
  return p;
}

void Network::unflatten(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) throw ValidationError("parameters", "length mismatch");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = p(at++);
    biases[l] = p.segment(at, biases[l].size());
    at += biases[l].size();
  }
  slope = p(at);
}

void Network::set_input_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (lower.size() != input_dim() || upper.size() != input_dim())
    throw ValidationError("input_box", "dimension mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(upper(i) > lower(i))) throw ValidationError("input_box", "degenerate interval");
  input_lower = lower;
  input_upper = upper;
}

Network xavier_init(const std::vector<int>& widths, std::uint64_t seed, Activation activation, int scale) {
  if (widths.size() < 2) throw ValidationError("widths", "need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw ValidationError("widths", "all widths must be positive");
  if (widths.back() != 1) throw ValidationError("widths", "output width must be 1");
  if (scale < 1) throw ValidationError("scale_n", "must be a positive integer");
  Network net;
  net.widths = widths;
  net.activation = activation;
  net.scale = scale;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double sd = std::sqrt(2.0 / (widths[l] + widths[l + 1]));
    std::normal_distribution<double> dist(0.0, sd);
    Eigen::MatrixXd W(widths[l + 1], widths[l]);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = dist(rng);
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(widths[l + 1]));
  }
  return net;
}

NetworkVars register_network(ad::Tape& tape, const Network& net, bool trainable, bool slope_trainable) {
  NetworkVars v;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    ad::Block W = net.weights[l].array();
    ad::Block b = net.biases[l].array();
    v.weights.push_back(trainable ? tape.leaf(std::move(W)) : tape.constant(std::move(W)));
    v.biases.push_back(trainable ? tape.leaf(std::move(b)) : tape.constant(std::move(b)));
  }
  v.slope = tape.scalar(net.slope, trainable && slope_trainable);
  return v;
}

TapeJet network_jet(ad::Tape& tape, const NetworkVars& vars, const Network& net, const Eigen::MatrixXd& inputs,
                    int spatial_dims) {
  const int d0 = net.input_dim();
  if (inputs.rows() != d0)
    throw ValidationError("inputs", "expected " + std::to_string(d0) + " coordinates, got " +
                                        std::to_string(inputs.rows()));
  if (spatial_dims < 0 || spatial_dims > d0) throw ValidationError("spatial_dims", "out of range");
  const Eigen::Index B = inputs.cols();

  ad::Block x = inputs.array();
  Eigen::VectorXd coord_scale = Eigen::VectorXd::Ones(d0);
  if (net.input_lower.size() == d0) {
    for (int i = 0; i < d0; ++i) {
      const double width = net.input_upper(i) - net.input_lower(i);
      coord_scale(i) = 2.0 / width;
      x.row(i) = coord_scale(i) * (x.row(i) - net.input_lower(i)) - 1.0;
    }
  }

  ad::Var h = tape.constant(std::move(x));
  std::vector<ad::Var> dh(static_cast<std::size_t>(spatial_dims));
  std::vector<ad::Var> d2h(static_cast<std::size_t>(spatial_dims));  // invalid handle = identically zero
  for (int i = 0; i < spatial_dims; ++i) {
    ad::Block seed = ad::Block::Zero(d0, B);
    seed.row(i).setConstant(coord_scale(i));
    dh[static_cast<std::size_t>(i)] = tape.constant(std::move(seed));
  }

  const int L = net.layers();
  ad::Var na = ad::scale(vars.slope, static_cast<double>(net.scale));
  for (int l = 0; l < L; ++l) {
    const ad::Var& W = vars.weights[static_cast<std::size_t>(l)];
    ad::Var z = ad::add(ad::matmul(W, h), vars.biases[static_cast<std::size_t>(l)]);
    std::vector<ad::Var> dz(dh.size()), d2z(dh.size());
    for (std::size_t i = 0; i < dh.size(); ++i) {
      dz[i] = ad::matmul(W, dh[i]);
      if (d2h[i].valid()) d2z[i] = ad::matmul(W, d2h[i]);
    }
    if (l == L - 1) {
      TapeJet jet;
      jet.value = z;
      for (std::size_t i = 0; i < dh.size(); ++i) {
        jet.d1.push_back(dz[i]);
        jet.d2.push_back(d2z[i].valid() ? d2z[i] : tape.constant(ad::Block::Zero(1, B)));
      }
      return jet;
    }
    ad::Var u = ad::mul(z, na);
    if (dh.empty()) {
      h = activate(u, net.activation, 0);
      continue;
    }
    const std::vector<ad::Var> sig = activate_jet(u, net.activation, 2);
    h = sig[0];
    const ad::Var& s1 = sig[1];
    const ad::Var& s2 = sig[2];
    for (std::size_t i = 0; i < dh.size(); ++i) {
      ad::Var du = ad::mul(dz[i], na);
      ad::Var curv = ad::mul(s2, ad::square(du));
      if (d2z[i].valid()) curv = ad::add(curv, ad::mul(s1, ad::mul(d2z[i], na)));
      dh[i] = ad::mul(s1, du);
      d2h[i] = curv;
    }
  }
  throw std::logic_error("network_jet: network has no layers");
}

JetValues forward_jet(const Network& net, const Eigen::MatrixXd& inputs, int spatial_dims) {
  ad::Tape tape;
  const NetworkVars vars = register_network(tape, net, false);
  const TapeJet jet = network_jet(tape, vars, net, inputs, spatial_dims);
  JetValues out;
  out.value = jet.value.value().matrix();
  for (const auto& v : jet.d1) out.d1.push_back(v.value().matrix());
  for (const auto& v : jet.d2) out.d2.push_back(v.value().matrix());
  return out;
}

Eigen::RowVectorXd forward(const Network& net, const Eigen::MatrixXd& inputs) {
  return forward_jet(net, inputs, 0).value;
}

Eigen::VectorXd gather_gradient(const ad::Tape& tape, const NetworkVars& vars, const Network& net) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(net.parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto rows = net.weights[l].rows(), cols = net.weights[l].cols();
    if (tape.is_leaf(vars.weights[l].id)) {
      const ad::Block gW = tape.grad(vars.weights[l]);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) g(at + r * cols + c) = gW(r, c);
    }
    at += rows * cols;
    const auto nb = net.biases[l].size();
    if (tape.is_leaf(vars.biases[l].id)) g.segment(at, nb) = tape.grad(vars.biases[l]).matrix();
    at += nb;
  }
  if (tape.is_leaf(vars.slope.id)) g(at) = tape.grad(vars.slope)(0, 0);
  return g;
}

namespace {
constexpr char kMagic[4] = {'F', 'P', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T take(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("snapshot truncated");
  return v;
}
}  // namespace

void save_snapshot(const std::string& path, const Network& net, const std::vector<double>& scalars) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open snapshot for writing: " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(net.widths.size()));
  for (int w : net.widths) put(out, static_cast<std::uint32_t>(w));
  put(out, static_cast<std::uint32_t>(net.activation));
  put(out, static_cast<std::uint32_t>(net.scale));
  put(out, net.seed);
  put(out, static_cast<std::uint32_t>(scalars.size()));
  put(out, static_cast<std::uint32_t>(net.input_lower.size()));
  for (Eigen::Index i = 0; i < net.input_lower.size(); ++i) {
    put(out, net.input_lower(i));
    put(out, net.input_upper(i));
  }
  const Eigen::VectorXd p = net.flatten();
  out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(scalars.data()),
            static_cast<std::streamsize>(scalars.size() * sizeof(double)));
  if (!out) throw std::runtime_error("snapshot write failed: " + path);
}

Network load_snapshot(const std::string& path, std::vector<double>* scalars) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a parameter snapshot: " + path);
  if (take<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported snapshot version");
  const auto nw = take<std::uint32_t>(in);
  std::vector<int> widths;
  for (std::uint32_t i = 0; i < nw; ++i) widths.push_back(static_cast<int>(take<std::uint32_t>(in)));
  const auto act = static_cast<Activation>(take<std::uint32_t>(in));
  const auto scale = static_cast<int>(take<std::uint32_t>(in));
  const auto seed = take<std::uint64_t>(in);
  const auto ns = take<std::uint32_t>(in);
  const auto nbox = take<std::uint32_t>(in);
  Eigen::VectorXd lo(nbox), hi(nbox);
  for (std::uint32_t i = 0; i < nbox; ++i) {
    lo(i) = take<double>(in);
    hi(i) = take<double>(in);
  }
  Network net = xavier_init(widths, seed, act, scale);
  if (nbox > 0) net.set_input_box(lo, hi);
  Eigen::VectorXd p(net.parameter_count());
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  std::vector<double> extra(ns);
  in.read(reinterpret_cast<char*>(extra.data()), static_cast<std::streamsize>(ns * sizeof(double)));
  if (!in) throw std::runtime_error("snapshot truncated: " + path);
  net.unflatten(p);
  if (scalars) *scalars = std::move(extra);
  return net;
}

}  // namespace fracpinn
