#include "cddm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cddm/errors.hpp"

namespace cddm {
namespace {

using Kind = CheckpointError::Kind;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError(Kind::Truncated, std::string("checkpoint truncated while reading ") + what + " at byte " +
                                                 std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Json tensor_index(const ParamSet& decoder, const ParamSet& encoder) {
  Json index = Json::array();
  for (const auto& [prefix, set] : {std::pair{"decoder/", &decoder}, std::pair{"encoder/", &encoder}}) {
    for (const auto& [name, t] : *set) index.push_back({{"name", prefix + name}, {"shape", t.shape()}});
  }
  return index;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  Json header = {{"format", "cddm-checkpoint"},
                 {"role", ckpt.role},
                 {"iteration", ckpt.iteration},
                 {"steps", m.steps},
                 {"shifted", m.shifted},
                 {"denoiser", to_json(m.denoiser)},
                 {"encoder", to_json(m.encoder)},
                 {"schedule", to_json(m.schedule)},
                 {"standardizer", to_json(m.standardizer)},
                 {"provenance", ckpt.provenance},
                 {"tensors", tensor_index(m.decoder, m.encoder_params)}};
  const std::string text = header.dump();

  std::string out = "CDDM";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.decoder.tensor_count() + m.encoder_params.tensor_count()));
  for (const auto& [prefix, set] : {std::pair{"decoder/", &m.decoder}, std::pair{"encoder/", &m.encoder_params}}) {
    for (const auto& [name, t] : *set) {
      const std::string full = prefix + name;
      put<std::uint32_t>(out, static_cast<std::uint32_t>(full.size()));
      out += full;
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      const std::size_t start = out.size();
      out.resize(start + 4 * t.size());
      char* dst = out.data() + start;
      for (float v : t.values()) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) *dst++ = static_cast<char>((bits >> (8 * i)) & 0xff);
      }
    }
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != "CDDM") throw CheckpointError(Kind::BadMagic, "not a checkpoint: bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::Version, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint32_t>("header length");
  const std::string_view header_text = r.take(header_len, "header");

  struct Raw {
    std::string name;
    Shape shape;
    std::string_view data;
  };
  std::vector<Raw> raws;
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Raw raw;
    raw.name = std::string(r.take(r.get<std::uint32_t>("name length"), "tensor name"));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointError(Kind::ShapeMismatch, "tensor '" + raw.name + "' has implausible rank");
    std::size_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      raw.shape.push_back(r.get<std::uint64_t>("shape"));
      size *= raw.shape.back();
    }
    if (size > r.remaining() / 4) {
      throw CheckpointError(Kind::Truncated, "checkpoint truncated in payload of tensor '" + raw.name + "'");
    }
    raw.data = r.take(4 * size, "tensor values");
    raws.push_back(std::move(raw));
  }
  const std::size_t body_end = r.pos();
  const auto stored = r.get<std::uint64_t>("checksum");
  if (r.remaining() != 0) throw CheckpointError(Kind::Truncated, "trailing bytes after checkpoint checksum");
  if (fnv1a(bytes.substr(0, body_end)) != stored)
    throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch: file is corrupted");

  Json header;
  Checkpoint ckpt;
  try {
    header = Json::parse(header_text);
    ckpt.role = header.at("role").get<std::string>();
    ckpt.iteration = header.at("iteration").get<std::size_t>();
    ckpt.provenance = header.at("provenance");
    ckpt.model.steps = header.at("steps").get<std::size_t>();
    ckpt.model.shifted = header.at("shifted").get<bool>();
    ckpt.model.denoiser = denoiser_from_json(header.at("denoiser"));
    ckpt.model.encoder = encoder_from_json(header.at("encoder"));
    ckpt.model.schedule = schedule_from_json(header.at("schedule"));
    ckpt.model.standardizer = standardizer_from_json(header.at("standardizer"));
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::Header, std::string("checkpoint header invalid: ") + e.what());
  }

  const Json& index = header["tensors"];
  if (!index.is_array() || index.size() != raws.size())
    throw CheckpointError(Kind::ShapeMismatch, "checkpoint tensor count disagrees with its header");
  for (std::size_t i = 0; i < raws.size(); ++i) {
    const Raw& raw = raws[i];
    if (index[i].value("name", "") != raw.name || index[i].value("shape", Shape{}) != raw.shape) {
      throw CheckpointError(Kind::ShapeMismatch, "tensor '" + raw.name + "' " + shape_string(raw.shape) +
                                                     " disagrees with header entry " + index[i].dump());
    }
    std::vector<float> values(raw.data.size() / 4);
    for (std::size_t v = 0; v < values.size(); ++v) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw.data[4 * v + b])) << (8 * b);
      values[v] = std::bit_cast<float>(bits);
    }
    Tensor t(raw.shape, std::move(values));
    if (raw.name.rfind("decoder/", 0) == 0) {
      ckpt.model.decoder.set(raw.name.substr(8), std::move(t));
    } else if (raw.name.rfind("encoder/", 0) == 0) {
      ckpt.model.encoder_params.set(raw.name.substr(8), std::move(t));
    } else {
      throw CheckpointError(Kind::ShapeMismatch, "tensor '" + raw.name + "' belongs to no parameter group");
    }
  }
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_binary_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace cddm
