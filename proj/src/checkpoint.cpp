#include "scp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "scp/config.hpp"
#include "scp/error.hpp"

namespace scp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'C', 'P', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading checkpoint " + path.string());
  return bytes;
}

struct Parsed {
  json header;
  std::size_t payload = 0;  // byte offset of the payload
};

Parsed parse_header(const std::string& bytes, const fs::path& path) {
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + "not a checkpoint (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = get_u32(p + 4);
  if (version != kCheckpointVersion) {
    throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = get_u32(p + 8);
  if (bytes.size() - 12 < len) throw FormatError(where + "truncated header");
  Parsed out;
  try {
    out.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const json::exception& e) {
    throw FormatError(where + "malformed header: " + e.what());
  }
  out.payload = 12 + std::size_t{len};
  return out;
}

}  // namespace

void round_to_f32(Model& model) {
  for (auto& p : model.all_params())
    for (auto& v : p.tensor->data()) v = static_cast<double>(static_cast<float>(v));
}

void save_checkpoint(const fs::path& path, Model& model, const Vocabulary& vocab,
                     const CheckpointMeta& meta) {
  json dir = json::array();
  std::string payload;
  for (const auto& p : model.all_params()) {
    const Tensor& t = *p.tensor;
    dir.push_back({{"name", p.name},
                   {"rank", t.shape().rank()},
                   {"dims", t.shape().dims},
                   {"offset", payload.size()}});
    for (double v : t.data()) put_f32(payload, v);
  }
  json header{{"phase", meta.phase},
              {"epoch", meta.epoch},
              {"model", to_json(model.cfg)},
              {"train", to_json(meta.train)},
              {"run", meta.run},
              {"rng", meta.rng_state},
              {"trained",
               {{"classifier", model.clf.trained},
                {"eval_classifier", model.eval_clf.trained},
                {"lm", model.lm.trained}}},
              {"vocab", vocab.tokens()},
              {"tensors", std::move(dir)}};
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("error writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

json read_checkpoint_header(const fs::path& path) { return parse_header(read_file(path), path).header; }

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  auto [h, payload] = parse_header(bytes, path);
  const std::string where = path.string() + ": ";
  try {
    Checkpoint ck;
    ck.meta.phase = h.at("phase").get<std::string>();
    ck.meta.epoch = h.at("epoch").get<std::size_t>();
    ck.meta.train = train_config_from_json(h.at("train"), TrainConfig{}, "train");
    ck.meta.rng_state = h.at("rng").get<std::string>();
    ck.meta.run = h.value("run", json(nullptr));
    ck.vocab = Vocabulary(std::vector<std::string>(h.at("vocab").begin(), h.at("vocab").end()));

    const ModelConfig cfg = model_config_from_json(h.at("model"), ModelConfig{}, "model");
    if (cfg.vocab_size != ck.vocab.size()) {
      throw FormatError(where + "vocabulary has " + std::to_string(ck.vocab.size()) +
                        " tokens but the model expects " + std::to_string(cfg.vocab_size));
    }
    // Shapes come from a freshly built model; the values are overwritten.
    ck.model = Model::create(cfg, 0);
    const auto& trained = h.at("trained");
    ck.model.clf.trained = trained.at("classifier").get<bool>();
    ck.model.eval_clf.trained = trained.at("eval_classifier").get<bool>();
    ck.model.lm.trained = trained.at("lm").get<bool>();

    std::map<std::string, Tensor*> slots;
    for (auto& p : ck.model.all_params()) slots[p.name] = p.tensor;
    const auto& dir = h.at("tensors");
    if (dir.size() != slots.size()) {
      throw FormatError(where + "expected " + std::to_string(slots.size()) + " tensors, found " +
                        std::to_string(dir.size()));
    }
    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + payload;
    const std::size_t avail = bytes.size() - payload;
    for (const auto& e : dir) {
      const auto name = e.at("name").get<std::string>();
      auto it = slots.find(name);
      if (it == slots.end()) throw FormatError(where + "unexpected tensor '" + name + "'");
      Tensor& t = *it->second;
      const auto dims = e.at("dims").get<std::vector<std::size_t>>();
      if (e.at("rank").get<std::size_t>() != dims.size() || Shape(dims) != t.shape()) {
        throw FormatError(where + "tensor '" + name + "' has shape " + Shape(dims).str() +
                          ", expected " + t.shape().str());
      }
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset > avail || (avail - offset) / 4 < t.size()) {
        throw FormatError(where + "tensor '" + name + "' runs past the end of the file");
      }
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(std::bit_cast<float>(get_u32(base + offset + 4 * i)));
      }
      slots.erase(it);
    }
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(where + "malformed header: " + e.what());
  } catch (const ContractError& e) {
    if (dynamic_cast<const FormatError*>(&e)) throw;
    throw FormatError(where + e.what());
  }
}

}  // namespace scp
