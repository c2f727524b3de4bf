#include "camel/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace camel::nn {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint16_t u16() {
    const auto b = take(2);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParamList<float>& params) {
  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion & 0xff));
  out.push_back(static_cast<char>(kCheckpointVersion >> 8));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (const int e : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (const float f : p.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

ParamList<float> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) throw IoError("not a checkpoint: bad magic");
  if (const auto v = in.u16(); v != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(v));
  }
  ParamList<float> params;
  while (!in.done()) {
    NamedTensor<float> p;
    p.name = std::string(in.take(in.u32()));
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw IoError("checkpoint: bad rank for " + p.name);
    Shape shape(rank);
    for (auto& e : shape) {
      const std::uint32_t x = in.u32();
      if (x == 0 || x > (1u << 28)) throw IoError("checkpoint: bad extent for " + p.name);
      e = static_cast<int>(x);
    }
    std::vector<float> data(shape_size(shape));
    for (auto& f : data) f = std::bit_cast<float>(in.u32());
    p.value = Tensor(std::move(shape), std::move(data));
    params.push_back(std::move(p));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamList<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ParamList<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

void load_into(const std::filesystem::path& path, Network<float>& net) { net.assign(load_checkpoint(path)); }

}  // namespace camel::nn
