#include "trackcast/model_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/checkpoint.hpp"

namespace trackcast {

namespace {
constexpr int kMetaVersion = 1;
}

std::string checkpoint_meta_path(const std::string& ckpt_path) { return ckpt_path + ".json"; }

template <typename T>
void save_model_checkpoint(const std::string& ckpt_path, const models::Model<T>& model,
                           const CheckpointMeta& meta) {
  num::save_checkpoint(ckpt_path, model.params);

  nlohmann::json j{{"format", "trackcast-checkpoint-meta"},
                   {"version", kMetaVersion},
                   {"dtype", std::string(train::to_string(meta.dtype))},
                   {"vocabulary", std::string(to_string(meta.vocabulary))},
                   {"model", models::model_spec_to_json(meta.spec)},
                   {"fold", meta.fold},
                   {"val_trajectory_ids", meta.val_trajectory_ids}};
  if (meta.metrics) {
    nlohmann::json m{{"ade", meta.metrics->ade},
                     {"fde", meta.metrics->fde},
                     {"val_loss", meta.metrics->val_loss},
                     {"epochs", meta.metrics->epochs}};
    if (meta.metrics->acc) m["acc"] = *meta.metrics->acc;
    if (meta.metrics->f1) m["f1"] = *meta.metrics->f1;
    j["metrics"] = m;
  }

  const std::string meta_path = checkpoint_meta_path(ckpt_path);
  std::ofstream out(meta_path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + meta_path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + meta_path + "'");
}

CheckpointMeta read_checkpoint_meta(const std::string& ckpt_path) {
  const std::string meta_path = checkpoint_meta_path(ckpt_path);
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + meta_path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint metadata '" + meta_path + "': " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "trackcast-checkpoint-meta")
      throw SchemaError("'" + meta_path + "' is not checkpoint metadata");
    if (j.at("version").get<int>() != kMetaVersion)
      throw SchemaError("unsupported checkpoint metadata version in '" + meta_path + "'");
    CheckpointMeta meta;
    meta.dtype = train::parse_dtype(j.at("dtype").get<std::string>());
    const std::string vocab_name = j.at("vocabulary").get<std::string>();
    const auto selector = parse_scenario(vocab_name);
    if (!selector) throw SchemaError("unknown vocabulary '" + vocab_name + "' in checkpoint");
    meta.vocabulary = *selector;
    meta.spec = models::model_spec_from_json(j.at("model"));
    meta.fold = j.value("fold", -1);
    if (j.count("val_trajectory_ids"))
      meta.val_trajectory_ids = j.at("val_trajectory_ids").get<std::vector<std::string>>();
    if (j.count("metrics")) {
      const auto& m = j.at("metrics");
      train::FoldMetrics fm;
      fm.fold = meta.fold;
      fm.ade = m.at("ade").get<double>();
      fm.fde = m.at("fde").get<double>();
      fm.val_loss = m.value("val_loss", 0.0);
      fm.epochs = m.value("epochs", std::size_t{0});
      if (m.count("acc")) fm.acc = m.at("acc").get<double>();
      if (m.count("f1")) fm.f1 = m.at("f1").get<double>();
      meta.metrics = fm;
    }
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint metadata '" + meta_path + "': " + e.what());
  }
}

template <typename T>
models::Model<T> load_model_checkpoint(const std::string& ckpt_path, const CheckpointMeta& meta) {
  auto model = models::Model<T>::build(meta.spec, 0);
  auto stored = num::load_checkpoint<T>(ckpt_path);
  if (stored.size() != model.params.size())
    throw SchemaError("checkpoint '" + ckpt_path + "' holds " + std::to_string(stored.size()) +
                      " parameters but its model spec defines " +
                      std::to_string(model.params.size()));
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (stored[i].name != model.params[i].name)
      throw SchemaError("checkpoint '" + ckpt_path + "': parameter '" + stored[i].name +
                        "' where '" + model.params[i].name + "' was expected");
    if (stored[i].value.shape != model.params[i].value.shape)
      throw SchemaError("checkpoint '" + ckpt_path + "': shape mismatch for '" + stored[i].name +
                        "'");
    model.params[i].value = std::move(stored[i].value);
  }
  return model;
}

template void save_model_checkpoint<float>(const std::string&, const models::Model<float>&,
                                           const CheckpointMeta&);
template void save_model_checkpoint<double>(const std::string&, const models::Model<double>&,
                                            const CheckpointMeta&);
template models::Model<float> load_model_checkpoint<float>(const std::string&,
                                                           const CheckpointMeta&);
template models::Model<double> load_model_checkpoint<double>(const std::string&,
                                                             const CheckpointMeta&);

}  // namespace trackcast
