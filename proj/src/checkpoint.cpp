#include "cdl/checkpoint.hpp"

#include <sstream>
#include <string_view>
#include <vector>

#include "cdl/error.hpp"
#include "cdl/text.hpp"

namespace cdl {

namespace {

constexpr std::string_view kTag = "cdl-checkpoint v1";

void put_matrix(std::string& out, const std::string& name, const Matrix& m) {
  out += "matrix " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ' ';
      append_double(out, m(r, c));
    }
    out += '\n';
  }
}

void put_vector(std::string& out, const std::string& name, const Vector& v) {
  out += "vector " + name + " " + std::to_string(v.size()) + "\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    append_double(out, v(i));
  }
  out += '\n';
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : lines_(split(text, '\n')), source_(std::move(source)) {}

  std::vector<std::string_view> next() {
    while (pos_ < lines_.size()) {
      const std::string_view line = trim(lines_[pos_++]);
      if (line.empty()) continue;
      std::vector<std::string_view> fields;
      for (std::string_view f : split(line, ' ')) {
        if (!f.empty()) fields.push_back(f);
      }
      return fields;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string_view> expect(std::string_view keyword, std::size_t fields) {
    auto f = next();
    if (f.empty() || f[0] != keyword || f.size() != fields) {
      fail("expected '" + std::string(keyword) + "' with " + std::to_string(fields - 1) +
           " arguments");
    }
    return f;
  }

  long long integer(std::string_view s) {
    const auto v = parse_int(s);
    if (!v) fail("bad integer '" + std::string(s) + "'");
    return *v;
  }

  double real(std::string_view s) {
    const auto v = parse_double(s);
    if (!v) fail("bad number '" + std::string(s) + "'");
    return *v;
  }

  Matrix matrix(const std::string& name) {
    auto h = expect("matrix", 4);
    if (h[1] != name) fail("expected matrix '" + name + "', found '" + std::string(h[1]) + "'");
    const long long rows = integer(h[2]);
    const long long cols = integer(h[3]);
    if (rows < 0 || cols < 0) fail("negative matrix shape");
    Matrix m(rows, cols);
    for (long long r = 0; r < rows; ++r) {
      auto f = next();
      if (static_cast<long long>(f.size()) != cols) fail("row width mismatch in " + name);
      for (long long c = 0; c < cols; ++c) m(r, c) = real(f[static_cast<std::size_t>(c)]);
    }
    return m;
  }

  Vector vector(const std::string& name) {
    auto h = expect("vector", 3);
    if (h[1] != name) fail("expected vector '" + name + "', found '" + std::string(h[1]) + "'");
    const long long n = integer(h[2]);
    Vector v(n);
    if (n == 0) return v;
    auto f = next();
    if (static_cast<long long>(f.size()) != n) fail("length mismatch in " + name);
    for (long long i = 0; i < n; ++i) v(i) = real(f[static_cast<std::size_t>(i)]);
    return v;
  }

  std::string_view raw_line() {
    while (pos_ < lines_.size()) {
      const std::string_view line = trim(lines_[pos_++]);
      if (!line.empty()) return line;
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(source_ + ":" + std::to_string(pos_) + ": " + msg);
  }

 private:
  std::vector<std::string_view> lines_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const TrainState& s) {
  std::string out(kTag);
  out += '\n';
  out += "iteration " + std::to_string(s.iteration) + "\n";
  out += "layers " + std::to_string(s.net.layers.size()) + "\n";
  for (const Layer& l : s.net.layers) {
    out += "layer " + std::to_string(l.spec.input_dim) + " " + std::to_string(l.spec.output_dim) +
           " " + std::string(activation_name(l.spec.activation)) + "\n";
  }
  for (std::size_t k = 0; k < s.net.layers.size(); ++k) {
    put_matrix(out, "weight_" + std::to_string(k), s.net.layers[k].weight);
    put_vector(out, "bias_" + std::to_string(k), s.net.layers[k].bias);
  }
  const HeadsParams& p = s.heads.params;
  out += "heads lambda " + format_double(p.lambda) + " alpha1 " + format_double(p.alpha1) +
         " alpha2 " + format_double(p.alpha2) + " mu " + format_double(p.mu) +
         " softmax_weight " + format_double(p.softmax_weight) + "\n";
  put_matrix(out, "w_n", s.heads.w_n);
  put_matrix(out, "w_v", s.heads.w_v);
  put_matrix(out, "gamma", s.heads.gamma);
  for (std::size_t k = 0; k < s.velocity.net.layers.size(); ++k) {
    put_matrix(out, "vel_weight_" + std::to_string(k), s.velocity.net.layers[k].d_weight);
    put_vector(out, "vel_bias_" + std::to_string(k), s.velocity.net.layers[k].d_bias);
  }
  put_matrix(out, "vel_w_n", s.velocity.w_n);
  put_matrix(out, "vel_w_v", s.velocity.w_v);
  std::ostringstream rng;
  rng << s.batch_rng;
  out += "rng " + rng.str() + "\n";
  out += "end\n";
  return out;
}

TrainState parse_checkpoint(const std::string& text, const std::string& source) {
  Reader in(text, source);
  if (in.raw_line() != kTag) in.fail("missing '" + std::string(kTag) + "' tag");
  TrainState s;
  s.iteration = in.integer(in.expect("iteration", 2)[1]);
  const long long layer_count = in.integer(in.expect("layers", 2)[1]);
  if (layer_count <= 0) in.fail("checkpoint needs at least one layer");
  std::vector<LayerSpec> specs;
  for (long long k = 0; k < layer_count; ++k) {
    auto f = in.expect("layer", 4);
    LayerSpec spec;
    spec.input_dim = static_cast<int>(in.integer(f[1]));
    spec.output_dim = static_cast<int>(in.integer(f[2]));
    try {
      spec.activation = parse_activation(f[3]);
    } catch (const std::invalid_argument& e) {
      in.fail(e.what());
    }
    specs.push_back(spec);
  }
  try {
    validate_layer_chain(specs);
  } catch (const std::invalid_argument& e) {
    in.fail(e.what());
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    Layer l{specs[k], in.matrix("weight_" + std::to_string(k)),
            in.vector("bias_" + std::to_string(k))};
    if (l.weight.rows() != l.spec.output_dim || l.weight.cols() != l.spec.input_dim ||
        l.bias.size() != l.spec.output_dim) {
      in.fail("layer " + std::to_string(k) + " parameters do not match its spec");
    }
    s.net.layers.push_back(std::move(l));
  }
  auto h = in.expect("heads", 11);
  const char* names[] = {"lambda", "alpha1", "alpha2", "mu", "softmax_weight"};
  double* slots[] = {&s.heads.params.lambda, &s.heads.params.alpha1, &s.heads.params.alpha2,
                     &s.heads.params.mu, &s.heads.params.softmax_weight};
  for (std::size_t i = 0; i < 5; ++i) {
    if (h[1 + 2 * i] != names[i]) in.fail(std::string("expected heads field ") + names[i]);
    *slots[i] = in.real(h[2 + 2 * i]);
  }
  s.heads.w_n = in.matrix("w_n");
  s.heads.w_v = in.matrix("w_v");
  s.heads.gamma = in.matrix("gamma");
  const Eigen::Index m = s.net.embedding_dim();
  if (s.heads.w_n.rows() != m || s.heads.w_v.rows() != m ||
      s.heads.w_n.cols() != s.heads.w_v.cols() || s.heads.gamma.rows() != m ||
      s.heads.gamma.cols() != m) {
    in.fail("head shapes do not match the embedding dim");
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    LayerGrad g{in.matrix("vel_weight_" + std::to_string(k)),
                in.vector("vel_bias_" + std::to_string(k))};
    if (g.d_weight.rows() != s.net.layers[k].weight.rows() ||
        g.d_weight.cols() != s.net.layers[k].weight.cols() ||
        g.d_bias.size() != s.net.layers[k].bias.size()) {
      in.fail("velocity buffer " + std::to_string(k) + " shape mismatch");
    }
    s.velocity.net.layers.push_back(std::move(g));
  }
  s.velocity.w_n = in.matrix("vel_w_n");
  s.velocity.w_v = in.matrix("vel_w_v");
  if (s.velocity.w_n.rows() != s.heads.w_n.rows() || s.velocity.w_n.cols() != s.heads.w_n.cols() ||
      s.velocity.w_v.rows() != s.heads.w_v.rows() || s.velocity.w_v.cols() != s.heads.w_v.cols()) {
    in.fail("head velocity shape mismatch");
  }
  const std::string_view rng_line = in.raw_line();
  if (rng_line.substr(0, 4) != "rng ") in.fail("expected 'rng' line");
  std::istringstream rng(std::string(rng_line.substr(4)));
  rng >> s.batch_rng;
  if (rng.fail()) in.fail("bad rng state");
  if (in.raw_line() != "end") in.fail("expected 'end'");
  return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace cdl
