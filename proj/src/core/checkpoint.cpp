// Checkpoint container: key-sorted JSON manifest, NUL, f32 tensor payload.

#include <cstring>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/train.hpp"

namespace fpp {

namespace {

using json = nlohmann::json;

constexpr std::string_view kCheckpointFormat = "fp-tagger-checkpoint";
constexpr int kCheckpointVersion = 1;

json manifest_of(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["id"] = ckpt.id;
  j["parent"] = ckpt.parent_id ? json(*ckpt.parent_id) : json(nullptr);
  j["fp_vocabulary"] = ckpt.vocabulary.words();
  j["config"] = to_json(ckpt.config);
  j["steps_completed"] = ckpt.steps_completed;
  j["class_weights"] = m.class_weights.w;
  j["hyper"] = {{"d_emb", m.hyper.d_emb},
                {"hidden", m.hyper.hidden},
                {"classes", m.hyper.classes},
                {"seed", m.hyper.seed},
                {"sequence_unit", to_string(m.hyper.sequence_unit)}};
  if (const auto* lookup = std::get_if<TrainableLookup>(&m.embedding))
    j["embedding"] = {{"kind", "lookup"}, {"tokens", lookup->table.tokens()}};
  else
    j["embedding"] = {{"kind", "precomputed"}, {"path", std::get<PrecomputedSource>(m.embedding).path}};

  json tensors = json::array();
  m.params.for_each([&](std::string_view name, const Matrix& t) {
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
  });
  j["tensors"] = std::move(tensors);
  return j;
}

void expect_shape(const Matrix& t, Eigen::Index rows, Eigen::Index cols, std::string_view name) {
  if (t.rows() != rows || t.cols() != cols)
    invalid("checkpoint tensor " + std::string(name) + " has shape [" + std::to_string(t.rows()) + ", " +
            std::to_string(t.cols()) + "], expected [" + std::to_string(rows) + ", " + std::to_string(cols) + "]");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out = manifest_of(ckpt).dump();
  out.push_back('\0');
  ckpt.model.params.for_each([&](std::string_view, const Matrix& t) {
    // Row-major order.
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        const float f = static_cast<float>(t(r, c));
        char bytes[sizeof f];
        std::memcpy(bytes, &f, sizeof f);
        out.append(bytes, sizeof f);
      }
    }
  });
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const PrecomputedEmbeddings> vectors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), std::move(vectors));
}

Checkpoint deserialize_checkpoint(const std::string& bytes, std::shared_ptr<const PrecomputedEmbeddings> vectors) {
  const auto nul = bytes.find('\0');
  if (nul == std::string::npos) invalid("checkpoint has no manifest terminator (truncated?)");

  json j;
  try {
    j = json::parse(bytes.substr(0, nul));
  } catch (const json::exception& e) {
    invalid(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (j.at("format") != kCheckpointFormat) invalid("not a tagger checkpoint");
    if (j.at("version") != kCheckpointVersion)
      invalid("unsupported checkpoint version " + j.at("version").dump() + " (expected " + std::to_string(kCheckpointVersion) + ")");

    ckpt.id = j.at("id").get<std::string>();
    if (!j.at("parent").is_null()) ckpt.parent_id = j.at("parent").get<std::string>();
    ckpt.vocabulary = FpVocabulary(j.at("fp_vocabulary").get<std::vector<std::string>>());
    ckpt.config = train_config_from_json(j.at("config"));
    ckpt.steps_completed = j.at("steps_completed").get<std::size_t>();

    const auto& jh = j.at("hyper");
    auto& model = ckpt.model;
    model.hyper = Hyper{jh.at("d_emb").get<std::size_t>(), jh.at("hidden").get<std::size_t>(), jh.at("classes").get<std::size_t>(),
                        jh.at("seed").get<std::uint64_t>(), parse_sequence_unit(jh.at("sequence_unit").get<std::string>())};
    if (model.hyper.classes != ckpt.vocabulary.class_count()) invalid("checkpoint class count does not match its vocabulary");
    model.class_weights.w = j.at("class_weights").get<std::vector<double>>();
    if (model.class_weights.w.size() != model.hyper.classes) invalid("checkpoint class weight count mismatch");

    const auto& je = j.at("embedding");
    const auto kind = je.at("kind").get<std::string>();
    std::size_t table_rows = 0;
    if (kind == "lookup") {
      TokenTable table(je.at("tokens").get<std::vector<std::string>>());
      table_rows = table.rows();
      model.embedding = TrainableLookup{std::move(table)};
    } else if (kind == "precomputed") {
      const auto source = je.at("path").get<std::string>();
      if (!vectors) {
        if (source.empty()) invalid("checkpoint uses precomputed embeddings but none were supplied");
        vectors = std::make_shared<const PrecomputedEmbeddings>(PrecomputedEmbeddings::load(source));
      }
      if (vectors->dim() != model.hyper.d_emb) invalid("precomputed embedding dimension does not match the checkpoint");
      model.embedding = PrecomputedSource{std::move(vectors), source};
    } else {
      invalid("unknown embedding kind \"" + kind + "\"");
    }

    // Tensor payload, in manifest order.
    std::size_t offset = nul + 1;
    std::vector<std::pair<std::string, Matrix>> tensors;
    for (const auto& jt : j.at("tensors")) {
      const auto name = jt.at("name").get<std::string>();
      const auto shape = jt.at("shape").get<std::vector<std::int64_t>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) invalid("bad shape for tensor " + name);
      Matrix t(shape[0], shape[1]);
      const std::size_t need = static_cast<std::size_t>(t.size()) * sizeof(float);
      if (bytes.size() < offset + need) invalid("checkpoint truncated inside tensor " + name);
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
          float f;
          std::memcpy(&f, bytes.data() + offset, sizeof f);
          offset += sizeof f;
          t(r, c) = f;
        }
      }
      tensors.emplace_back(name, std::move(t));
    }
    if (offset != bytes.size()) invalid("checkpoint has trailing bytes after the declared tensors");

    std::size_t k = 0;
    model.params.for_each([&](std::string_view name, Matrix& t) {
      if (k >= tensors.size() || tensors[k].first != name) invalid("checkpoint tensor list does not match the model layout");
      t = std::move(tensors[k++].second);
    });
    if (k != tensors.size()) invalid("checkpoint declares unexpected tensors");

    const auto d = static_cast<Eigen::Index>(model.hyper.d_emb), h = static_cast<Eigen::Index>(model.hyper.hidden),
               c = static_cast<Eigen::Index>(model.hyper.classes);
    const auto& p = model.params;
    expect_shape(p.embedding, static_cast<Eigen::Index>(table_rows), d, "embedding");
    expect_shape(p.fwd_w, 4 * h, d + h, "fwd.W");
    expect_shape(p.fwd_b, 4 * h, 1, "fwd.b");
    expect_shape(p.bwd_w, 4 * h, d + h, "bwd.W");
    expect_shape(p.bwd_b, 4 * h, 1, "bwd.b");
    expect_shape(p.out_w, 2 * h, c, "out.W");
    expect_shape(p.out_b, c, 1, "out.b");
  } catch (const json::exception& e) {
    invalid(std::string("checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

}  // namespace fpp
