#include "cleanctg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace cleanctg::nc {

Tensor& ModelState::param(const std::string& name, const Shape& shape, double init_sd, Rng& rng,
                          double init_fill) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.shape() != shape)
      throw ValidationError("shape", "parameter " + name + " exists with a different shape");
    return it->second;
  }
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> data(n, init_fill);
  if (init_sd > 0.0)
    for (auto& v : data) v = rng.normal(0.0, init_sd);
  auto [pos, inserted] = params_.emplace(name, Tensor(shape, std::move(data), true));
  order_.push_back(name);
  return pos->second;
}

Tensor* ModelState::find(const std::string& name) {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

const Tensor* ModelState::find(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

Tensor& ModelState::at(const std::string& name) {
  if (auto* t = find(name)) return *t;
  throw RuntimeFailure("missing-parameter", "no parameter named " + name);
}

const Tensor& ModelState::at(const std::string& name) const {
  if (auto* t = find(name)) return *t;
  throw RuntimeFailure("missing-parameter", "no parameter named " + name);
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ModelState::freeze_prefix(const std::string& prefix) {
  for (const auto& p : frozen_prefixes_)
    if (p == prefix) return;
  frozen_prefixes_.push_back(prefix);
}

bool ModelState::frozen(const std::string& name) const {
  for (const auto& p : frozen_prefixes_)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

void ModelState::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::uint64_t ModelState::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& name : order_) {
    h = fnv1a64(name, h);
    const auto& t = params_.at(name);
    h = fnv1a64(t.data().data(), t.data().size() * sizeof(double), h);
  }
  return h;
}

AdamOptimizer::AdamOptimizer(const AdamConfig& cfg) : cfg_(cfg) {
  if (cfg.lr <= 0.0) throw ValidationError("config", "learning rate must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ValidationError("config", "adam betas must be in [0,1)");
}

void AdamOptimizer::step(ModelState& state) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : state.names()) {
    Tensor& p = state.at(name);
    if (state.frozen(name)) {
      p.zero_grad();
      continue;
    }
    const auto& g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != g.size()) m.assign(g.size(), 0.0);
    if (v.size() != g.size()) v.assign(g.size(), 0.0);
    auto& data = p.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("checkpoint", "truncated checkpoint file");
  return v;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path,
                     const nlohmann::json& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("io", "cannot write checkpoint: " + path.string());
  out.write("CCTG", 4);
  write_raw(out, state.version);
  write_raw(out, static_cast<std::uint32_t>(state.names().size()));
  for (const auto& name : state.names()) {
    const Tensor& t = *state.find(name);
    write_raw(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(out, static_cast<std::uint8_t>(0));  // dtype f64
    write_raw(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) write_raw(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
  if (!out) throw RuntimeFailure("io", "checkpoint write failed: " + path.string());

  nlohmann::json side = manifest;
  side["checkpoint_version"] = state.version;
  side["frozen_prefixes"] = state.frozen_prefixes();
  side["content_hash"] = state.content_hash();
  write_text_file(path.string() + ".json", side.dump(2) + "\n");
}

ModelState load_checkpoint(const std::filesystem::path& path, nlohmann::json* manifest_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("io", "cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CCTG", 4) != 0)
    throw ValidationError("checkpoint", "bad magic bytes (not a CCTG checkpoint)");
  ModelState state;
  state.version = read_raw<std::uint32_t>(in);
  const auto count = read_raw<std::uint32_t>(in);
  Rng unused(0);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = read_raw<std::uint8_t>(in);
    if (dtype != 0) throw ValidationError("checkpoint", "unsupported dtype");
    const auto rank = read_raw<std::uint8_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = read_raw<std::uint32_t>(in);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    Tensor& t = state.param(name, shape, 0.0, unused);
    in.read(reinterpret_cast<char*>(t.mutable_data().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ValidationError("checkpoint", "truncated tensor data");
  }
  const std::filesystem::path side = path.string() + ".json";
  if (std::filesystem::exists(side)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(side.string()));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("checkpoint", std::string("bad manifest sidecar: ") + e.what());
    }
    for (const auto& p : j.value("frozen_prefixes", std::vector<std::string>{}))
      state.freeze_prefix(p);
    if (manifest_out) *manifest_out = std::move(j);
  } else if (manifest_out) {
    *manifest_out = nlohmann::json::object();
  }
  return state;
}

}  // namespace cleanctg::nc
