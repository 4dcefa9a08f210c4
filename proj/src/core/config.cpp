#include "core/config.hpp"

#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "core/error.hpp"

namespace fpp {

namespace {

nlohmann::json to_json_value(const toml::node& node, const std::string& key) {
  if (const auto* t = node.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json_value(v, std::string(k.str()));
    return out;
  }
  if (const auto* i = node.as_integer()) {
    // Every integer field in TrainConfig is unsigned.
    if (i->get() < 0) invalid("config key \"" + key + "\" must not be negative");
    return static_cast<std::uint64_t>(i->get());
  }
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* b = node.as_boolean()) return b->get();
  invalid("config key \"" + key + "\" has an unsupported value type");
}

}  // namespace

TrainConfig parse_train_config(std::string_view toml_text, TrainConfig base, std::string_view source_name) {
  toml::table table;
  try {
    table = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    invalid(std::string(source_name) + ":" + std::to_string(where.line) + ":" + std::to_string(where.column) + ": " +
            std::string(e.description()));
  }
  return train_config_from_json(to_json_value(table, "<root>"), base);
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str(), base, path.string());
}

}  // namespace fpp
