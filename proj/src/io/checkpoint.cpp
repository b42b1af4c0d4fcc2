#include "mpa/io/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"

namespace mpa::io {
namespace {

constexpr char kMagic[8] = {'M', 'P', 'A', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw InvalidInput("string too long");
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view origin) : bytes_(bytes), origin_(origin) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(std::string(origin_) + ": " + what + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
  }

  std::string_view bytes_;
  std::string_view origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);

  KeyValues kv = ckpt.model.config().to_map();
  for (const auto& [k, v] : ckpt.train_config) kv.emplace(k, v);
  put_string(out, format_key_values(kv));

  put<std::uint8_t>(out, ckpt.vocab.level() == text::Level::Phoneme ? 1 : 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (const auto& t : ckpt.vocab.tokens()) put_string(out, t);

  put<std::uint64_t>(out, ckpt.seed);
  put<std::uint64_t>(out, ckpt.step);
  put<std::uint8_t>(out, ckpt.model.has_score_head() ? 1 : 0);

  const auto& params = ckpt.model.params();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.value(i);
    put_string(out, params.name(i));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    if constexpr (std::endian::native == std::endian::little) {
      out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(float));
    } else {
      for (float f : t.data()) put<float>(out, f);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view origin) {
  Reader r(bytes, origin);
  if (r.raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) r.fail("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }

  const KeyValues kv = parse_key_values(r.get_string(), origin);
  KeyValues train_kv;
  for (const auto& [k, v] : kv) {
    if (k.rfind("train.", 0) == 0) train_kv.emplace(k, v);
  }
  KeyValues model_kv;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) == 0) model_kv.emplace(k, v);
  }
  model::ModelConfig config;
  try {
    config = model::ModelConfig::from_map(model_kv, model::ModelConfig{});
  } catch (const InvalidInput& e) {
    r.fail(std::string("bad model config: ") + e.what());
  }

  const auto level_byte = r.get<std::uint8_t>();
  if (level_byte > 1) r.fail("bad vocabulary level");
  const auto level = level_byte == 1 ? text::Level::Phoneme : text::Level::Word;
  const auto n_tokens = r.get<std::uint32_t>();
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(r.get_string());

  const auto seed = r.get<std::uint64_t>();
  const auto step = r.get<std::uint64_t>();
  const auto has_head = r.get<std::uint8_t>();

  nn::ParameterStore store;
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 4) r.fail("parameter '" + name + "' has rank " + std::to_string(rank));
    nn::Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      if (d > (std::size_t{1} << 32)) r.fail("parameter '" + name + "' dimension too large");
      numel *= d;
    }
    std::vector<float> data(numel);
    if constexpr (std::endian::native == std::endian::little) {
      auto raw = r.raw(numel * sizeof(float));
      std::memcpy(data.data(), raw.data(), raw.size());
    } else {
      for (auto& f : data) f = r.get<float>();
    }
    try {
      store.add(std::move(name), nn::Tensor(std::move(shape), std::move(data)));
    } catch (const InvalidInput& e) {
      r.fail(e.what());
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");

  try {
    text::Vocabulary vocab = text::Vocabulary::from_tokens(std::move(tokens), level);
    if (vocab.size() != config.vocab_size) {
      r.fail("vocabulary has " + std::to_string(vocab.size()) + " tokens, config says " +
             std::to_string(config.vocab_size));
    }
    auto model = model::MpaModel::from_parameters(config, std::move(store));
    if (model.has_score_head() != (has_head != 0)) r.fail("score head flag disagrees with parameters");
    return Checkpoint{std::move(model), std::move(vocab), std::move(train_kv), seed, step};
  } catch (const InvalidInput& e) {
    r.fail(e.what());
  } catch (const ShapeError& e) {
    r.fail(e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace mpa::io
