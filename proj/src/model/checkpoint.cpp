#include "rsyn/checkpoint.hpp"

#include <set>

#include "../io/binary.hpp"
#include "rsyn/error.hpp"

namespace rsyn {

namespace {

constexpr std::string_view kMagic = "RSYNCKPT";

struct Header {
  ModelConfig cfg;
  Variant variant;
  std::size_t count;
};

Header read_header(io::ByteReader& in, const std::string& path) {
  if (in.remaining() < kMagic.size() || in.bytes(kMagic.size()) != kMagic) {
    throw FormatError(path + ": not a checkpoint file");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::string text = in.bytes(in.u32());
  try {
    const auto j = nlohmann::json::parse(text);
    Header h{ModelConfig::from_json(j.at("config")), parse_variant(j.at("variant").get<std::string>()),
             j.at("parameters").get<std::size_t>()};
    h.cfg.validate();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const SttModel& model, const std::string& path) {
  io::ByteWriter out;
  out.bytes(kMagic);
  out.u32(kCheckpointVersion);
  nlohmann::json header{{"variant", to_string(model.variant())},
                        {"config", model.config().to_json()},
                        {"parameters", model.parameters().size()},
                        {"dtype", "float32-le"}};
  out.str(header.dump());
  for (const auto& p : model.parameters()) {
    out.str(p->name);
    out.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) out.u32(static_cast<std::uint32_t>(d));
    for (double v : p->value.vec()) out.f32(static_cast<float>(v));
  }
  io::write_file(path, out.buffer());
}

std::pair<ModelConfig, Variant> peek_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes.data(), bytes.size(), path);
  auto h = read_header(in, path);
  return {h.cfg, h.variant};
}

SttModel load_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes.data(), bytes.size(), path);
  const Header h = read_header(in, path);
  SttModel model(h.cfg, h.variant, 0);
  if (h.count != model.parameters().size()) {
    throw FormatError(path + ": header lists " + std::to_string(h.count) + " parameters, config implies " +
                      std::to_string(model.parameters().size()));
  }
  std::set<std::string> loaded;
  for (std::size_t i = 0; i < h.count; ++i) {
    const std::string name = in.str();
    Parameter* p = model.find(name);
    if (!p) throw FormatError(path + ": unexpected parameter '" + name + "'");
    if (!loaded.insert(name).second) throw FormatError(path + ": duplicate parameter '" + name + "'");
    const auto rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    if (shape != p->value.shape()) {
      throw FormatError(path + ": parameter '" + name + "' has shape " + to_string(shape) + ", config expects " +
                        to_string(p->value.shape()));
    }
    in.need(p->value.size() * 4);
    for (auto& v : p->value.vec()) v = static_cast<double>(in.f32());
  }
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes after parameter blobs");
  return model;
}

}  // namespace rsyn
