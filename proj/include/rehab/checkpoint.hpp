#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rehab/errors.hpp"
#include "rehab/trainer.hpp"
#include "rehab/util.hpp"

namespace rehab {

// Binary layout (little-endian):
//   "RHBCKPT\0" | u32 version | u64 n, n bytes JSON metadata |
//   u64 n, n f64 actor params | u64 n, n f64 critic params | u64 FNV-1a of all prior bytes
// Metadata carries the training config, network shapes, timesteps and the
// trailing mean return.

inline nlohmann::json to_json(const TrainingConfig& c) {
  return {{"timesteps", c.total_timesteps}, {"horizon", c.horizon},
          {"minibatch", c.minibatch},       {"epochs", c.epochs},
          {"lr", c.learning_rate},          {"gamma", c.gamma},
          {"lambda", c.gae_lambda},         {"clip", c.clip_eps},
          {"entropy_coef", c.entropy_coef}, {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm}, {"anneal_lr", c.anneal_lr},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.total_timesteps = j.at("timesteps").get<long>();
  c.horizon = j.at("horizon").get<int>();
  c.minibatch = j.at("minibatch").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("lr").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.gae_lambda = j.at("lambda").get<double>();
  c.clip_eps = j.at("clip").get<double>();
  c.entropy_coef = j.at("entropy_coef").get<double>();
  c.value_coef = j.at("value_coef").get<double>();
  c.max_grad_norm = j.at("max_grad_norm").get<double>();
  c.anneal_lr = j.at("anneal_lr").get<bool>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline constexpr char kMagic[8] = {'R', 'H', 'B', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FileError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void put_params(std::string& buf, const Vector& p) {
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(p.size()));
  buf.append(reinterpret_cast<const char*>(p.data()), sizeof(double) * p.size());
}

inline void get_params(Reader& r, Mlp& net, const char* which) {
  const auto n = r.get<std::uint64_t>();
  if (n != static_cast<std::uint64_t>(net.num_params())) {
    throw FileError(std::string("checkpoint ") + which + " parameter count does not match its shape");
  }
  const auto raw = r.bytes(n * sizeof(double));
  std::memcpy(net.params().data(), raw.data(), raw.size());
}

}  // namespace detail

inline std::string serialize(const PolicyCheckpoint& ck) {
  nlohmann::json meta = {{"config", to_json(ck.config)},
                         {"actor_sizes", ck.net.actor.sizes()},
                         {"critic_sizes", ck.net.critic.sizes()},
                         {"timesteps", ck.timesteps},
                         {"average_return", ck.average_return}};
  const std::string meta_text = meta.dump();
  std::string buf(detail::kMagic, sizeof(detail::kMagic));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.version));
  detail::put<std::uint64_t>(buf, meta_text.size());
  buf += meta_text;
  detail::put_params(buf, ck.net.actor.params());
  detail::put_params(buf, ck.net.critic.params());
  detail::put<std::uint64_t>(buf, fnv1a(buf));
  return buf;
}

inline PolicyCheckpoint deserialize(std::string_view data) {
  detail::Reader r(data);
  if (r.bytes(sizeof(detail::kMagic)) != std::string_view(detail::kMagic, sizeof(detail::kMagic))) {
    throw FileError("not a policy checkpoint (bad magic)");
  }
  PolicyCheckpoint ck;
  ck.version = static_cast<int>(r.get<std::uint32_t>());
  if (ck.version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(ck.version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (data.size() < sizeof(std::uint64_t)) throw FileError("checkpoint truncated");
  const auto body = data.substr(0, data.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + body.size(), sizeof(stored));
  if (stored != fnv1a(body)) throw FileError("checkpoint checksum mismatch");

  const auto meta_len = r.get<std::uint64_t>();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(meta_len));
    ck.config = training_config_from_json(meta.at("config"));
    ck.timesteps = meta.at("timesteps").get<long>();
    ck.average_return = meta.at("average_return").get<double>();
    ck.net.actor = Mlp(meta.at("actor_sizes").get<std::vector<int>>());
    ck.net.critic = Mlp(meta.at("critic_sizes").get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  detail::get_params(r, ck.net.actor, "actor");
  detail::get_params(r, ck.net.critic, "critic");
  if (r.pos() != body.size()) throw FileError("checkpoint has trailing bytes");
  return ck;
}

// Checksum stored in a serialized checkpoint's trailer.
inline std::uint64_t checksum_of(std::string_view serialized) {
  if (serialized.size() < sizeof(std::uint64_t)) throw FileError("checkpoint truncated");
  std::uint64_t v;
  std::memcpy(&v, serialized.data() + serialized.size() - sizeof(v), sizeof(v));
  return v;
}

inline void save_checkpoint(const std::filesystem::path& path, const PolicyCheckpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write checkpoint " + path.string());
  const auto buf = serialize(ck);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FileError("failed writing checkpoint " + path.string());
}

inline PolicyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(data);
  } catch (const FileError& e) {
    throw FileError(path.string() + ": " + e.what());
  }
}

}  // namespace rehab
