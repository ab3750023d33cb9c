#include "hetfuse/model_io.hpp"

#include "hetfuse/csv_io.hpp"
#include "hetfuse/error.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>

namespace hetfuse {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'M', 'O', 'D', 'E', 'L', '\n'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  require(pos + sizeof(U) <= in.size(), ErrorKind::Parse, "model file truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return v;
}

void put_values(std::string& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) put_le(out, std::bit_cast<std::uint64_t>(data[i]));
}

void get_values(const std::string& in, std::size_t& pos, double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_le<std::uint64_t>(in, pos));
}

}  // namespace

std::string schema_fingerprint(const ChannelSchema& schema) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xFF;
    h *= 0x100000001b3ULL;
  };
  for (const auto& c : schema.channels()) {
    mix(c.name);
    mix(to_string(c.modality));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string encode_model(const ModelFile& model) {
  model.net.check();
  nlohmann::json header;
  header["fingerprint"] = model.fingerprint;
  header["byte_order"] = "little-endian f64";
  header["extension"] = model.extension;
  auto& layers = header["layers"];
  layers = nlohmann::json::array();
  for (const auto& l : model.net.layers) {
    nlohmann::json j;
    j["in"] = l.in_dim();
    j["out"] = l.out_dim();
    j["activation"] = to_string(l.activation);
    if (l.batchnorm) {
      j["batchnorm"] = {{"momentum", l.batchnorm->momentum}, {"epsilon", l.batchnorm->epsilon}};
    }
    layers.push_back(std::move(j));
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kModelFormatVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (const auto& l : model.net.layers) {
    const kernels::RowMatrix w = l.weight;
    put_values(out, w.data(), w.size());
    put_values(out, l.bias.data(), l.bias.size());
    if (l.batchnorm) {
      const auto& bn = *l.batchnorm;
      put_values(out, bn.gamma.data(), bn.gamma.size());
      put_values(out, bn.beta.data(), bn.beta.size());
      put_values(out, bn.running_mean.data(), bn.running_mean.size());
      put_values(out, bn.running_var.data(), bn.running_var.size());
    }
  }
  return out;
}

ModelFile decode_model(const std::string& bytes) {
  require(bytes.size() >= sizeof(kMagic) && bytes.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) == 0,
          ErrorKind::Parse, "not a model file (bad magic)");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  require(version == kModelFormatVersion, ErrorKind::Parse, "unsupported model format version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(bytes, pos);
  require(pos + len <= bytes.size(), ErrorKind::Parse, "model header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model header: ") + e.what());
  }
  pos += len;

  ModelFile model;
  try {
    model.fingerprint = header.at("fingerprint").get<std::string>();
    model.extension = header.value("extension", nlohmann::json::object());
    for (const auto& j : header.at("layers")) {
      DenseLayer l;
      const auto in = j.at("in").get<Eigen::Index>();
      const auto out = j.at("out").get<Eigen::Index>();
      require(in > 0 && out > 0, ErrorKind::Parse, "model layer with non-positive shape");
      l.activation = parse_activation(j.at("activation").get<std::string>());
      kernels::RowMatrix w(out, in);
      get_values(bytes, pos, w.data(), w.size());
      l.weight = w;
      l.bias.resize(out);
      get_values(bytes, pos, l.bias.data(), out);
      if (j.contains("batchnorm")) {
        BatchNormState bn = BatchNormState::identity(out);
        bn.momentum = j["batchnorm"].at("momentum").get<double>();
        bn.epsilon = j["batchnorm"].at("epsilon").get<double>();
        get_values(bytes, pos, bn.gamma.data(), out);
        get_values(bytes, pos, bn.beta.data(), out);
        get_values(bytes, pos, bn.running_mean.data(), out);
        get_values(bytes, pos, bn.running_var.data(), out);
        l.batchnorm = std::move(bn);
      }
      model.net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model header: ") + e.what());
  }
  require(pos == bytes.size(), ErrorKind::Parse, "trailing bytes after model weights");
  model.net.check();
  return model;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) { write_file(path, encode_model(model)); }

ModelFile load_model(const std::filesystem::path& path, const std::optional<std::string>& expected) {
  ModelFile model = decode_model(read_file(path));
  if (expected && *expected != model.fingerprint) {
    fail(ErrorKind::FingerprintMismatch,
         "model fingerprint " + model.fingerprint + " does not match schema fingerprint " + *expected);
  }
  return model;
}

}  // namespace hetfuse
