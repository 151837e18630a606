#include "tcca/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tcca {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_bytes(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  put_bytes(out, name);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  Matrix matrix() {
    const std::uint32_t rows = u32(), cols = u32();
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) read(&m(r, c), sizeof(double));
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamW& optimizer,
                     const std::string& data_signature, int epoch, const std::string& rng_state) {
  json meta;
  meta["config"] = to_json(model.config);
  meta["config_hash"] = hex64(config_hash(model.config));
  meta["classes"] = model.classes;
  meta["feature_dim"] = model.feature_dim;
  meta["data_signature"] = data_signature;
  meta["epoch"] = epoch;
  meta["rng_state"] = rng_state;
  meta["optimizer_step"] = optimizer.step;

  std::ostringstream out;
  out.write("TCCA", 4);
  put_u32(out, kCheckpointFormat);
  put_bytes(out, meta.dump());
  const int n = model.store.size();
  const bool moments = static_cast<int>(optimizer.m.size()) == n && static_cast<int>(optimizer.v.size()) == n;
  put_u32(out, static_cast<std::uint32_t>(moments ? 3 * n : n));
  for (int p = 0; p < n; ++p) put_matrix(out, model.store.name(p), model.store.value(p));
  if (moments) {
    for (int p = 0; p < n; ++p) put_matrix(out, "adam.m/" + model.store.name(p), optimizer.m[static_cast<std::size_t>(p)]);
    for (int p = 0; p < n; ++p) put_matrix(out, "adam.v/" + model.store.name(p), optimizer.v[static_cast<std::size_t>(p)]);
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader in{std::string(std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>())};

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "TCCA", 4) != 0) throw CheckpointError("not a checkpoint file: " + path.string());
  const std::uint32_t format = in.u32();
  if (format != kCheckpointFormat) throw CheckpointError("unsupported checkpoint format " + std::to_string(format));

  json meta;
  RunConfig config;
  try {
    meta = json::parse(in.str());
    config = parse_run_config(meta.at("config"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  if (meta.at("config_hash").get<std::string>() != hex64(config_hash(config)))
    throw CheckpointError("checkpoint config hash does not match its configuration");

  // Values are overwritten below, so the initialization mode is irrelevant.
  RunConfig build = config;
  build.crf.init = CrfConfig::Init::random;
  Checkpoint ck{build_model(build, meta.at("classes").get<int>(), meta.at("feature_dim").get<int>(), {}), {}, {}, 0, {}};
  ck.model.config = config;
  ck.data_signature = meta.at("data_signature").get<std::string>();
  ck.epoch = meta.at("epoch").get<int>();
  ck.rng_state = meta.at("rng_state").get<std::string>();

  ad::ParamStore& store = ck.model.store;
  ck.optimizer.init(store);
  ck.optimizer.weight_decay = config.train.weight_decay;
  ck.optimizer.step = meta.at("optimizer_step").get<long>();

  std::vector<bool> seen(static_cast<std::size_t>(store.size()), false);
  const std::uint32_t records = in.u32();
  for (std::uint32_t r = 0; r < records; ++r) {
    const std::string name = in.str();
    Matrix value = in.matrix();
    ad::Gradients* slot = nullptr;
    std::string pname = name;
    if (name.rfind("adam.m/", 0) == 0) {
      slot = &ck.optimizer.m;
      pname = name.substr(7);
    } else if (name.rfind("adam.v/", 0) == 0) {
      slot = &ck.optimizer.v;
      pname = name.substr(7);
    }
    const auto id = store.find(pname);
    if (!id) throw CheckpointError("checkpoint has unknown tensor '" + name + "'");
    Matrix& dst = slot ? (*slot)[static_cast<std::size_t>(*id)] : store.value(*id);
    if (dst.rows() != value.rows() || dst.cols() != value.cols())
      throw CheckpointError("checkpoint tensor '" + name + "' has the wrong shape");
    dst = std::move(value);
    if (!slot) seen[static_cast<std::size_t>(*id)] = true;
  }
  if (!in.done()) throw CheckpointError("trailing bytes in checkpoint");
  for (int p = 0; p < store.size(); ++p)
    if (!seen[static_cast<std::size_t>(p)]) throw CheckpointError("checkpoint lacks parameter '" + store.name(p) + "'");
  return ck;
}

}  // namespace tcca
