#include <istream>
#include <ostream>

#include <json.hpp>

#include "milab/critic.hpp"
#include "milab/error.hpp"

namespace milab {

namespace {

using Json = nlohmann::ordered_json;

const char* kind_name(CriticKind kind) {
  switch (kind) {
    case CriticKind::kConcat: return "concat";
    case CriticKind::kSeparable: return "separable";
    case CriticKind::kOneHotLabel: return "onehot_label";
  }
  return "concat";
}

CriticKind kind_from(const std::string& s) {
  if (s == "concat") return CriticKind::kConcat;
  if (s == "separable") return CriticKind::kSeparable;
  if (s == "onehot_label") return CriticKind::kOneHotLabel;
  throw Error(ErrorCode::kParse, "checkpoint: unknown critic kind '" + s + "'");
}

}  // namespace

void save_checkpoint(const Critic& critic, std::ostream& out) {
  Json doc;
  doc["kind"] = kind_name(critic.kind());
  doc["widths"] = critic.spec().widths;
  doc["output"] = std::string(to_string(critic.spec().output));
  doc["x_dim"] = critic.x_dim();
  doc["output_offset"] = critic.output_offset();
  Json params = Json::array();
  for (const auto& p : critic.parameters()) {
    Json entry;
    entry["name"] = p.name;
    entry["shape"] = {p.value.rows(), p.value.cols()};
    Json values = Json::array();
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) values.push_back(p.value(r, c));
    }
    entry["values"] = std::move(values);
    params.push_back(std::move(entry));
  }
  doc["parameters"] = std::move(params);
  out << doc.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "checkpoint: write failed");
}

Critic load_checkpoint(std::istream& in) {
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
  try {
    MlpSpec spec;
    spec.widths = doc.at("widths").get<std::vector<int>>();
    spec.output = output_activation_from_string(doc.at("output").get<std::string>());
    spec.x_dim = doc.at("x_dim").get<int>();
    const CriticKind kind = kind_from(doc.at("kind").get<std::string>());
    if (kind != CriticKind::kConcat) spec.x_dim = 0;
    Critic critic = Critic::build(spec, kind);
    critic.shift_output(doc.at("output_offset").get<double>());

    const Json& params = doc.at("parameters");
    auto& dst = critic.parameters();
    if (params.size() != dst.size()) {
      throw Error(ErrorCode::kParse, "checkpoint: parameter count does not match architecture");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const Json& entry = params[k];
      if (entry.at("name").get<std::string>() != dst[k].name) {
        throw Error(ErrorCode::kParse, "checkpoint: unexpected parameter '" +
                                           entry.at("name").get<std::string>() + "'");
      }
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      const auto values = entry.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != dst[k].value.rows() ||
          shape[1] != dst[k].value.cols() ||
          values.size() != static_cast<std::size_t>(shape[0] * shape[1])) {
        throw Error(ErrorCode::kParse, "checkpoint: shape mismatch for '" + dst[k].name + "'");
      }
      for (Eigen::Index r = 0; r < shape[0]; ++r) {
        for (Eigen::Index c = 0; c < shape[1]; ++c) dst[k].value(r, c) = values[r * shape[1] + c];
      }
    }
    return critic;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace milab
