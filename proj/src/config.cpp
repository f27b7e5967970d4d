#include "udaseg/config.hpp"

#include <zlib.h>

#include <fstream>
#include <set>

namespace udaseg {

using nlohmann::json;

namespace {

// Tracks consumed keys so unknown ones can be reported with their path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path_ + key + "': " + e.what());
    }
  }

  void get_spacing(const char* key, std::optional<std::array<double, 3>>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<std::array<double, 3>>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path_ + key + "': " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  json section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? j_.at(key) : json::object();
  }

  void done() {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_tissue(const json& j, const std::string& path, TissueStats& t) {
  Reader r(j, path);
  r.get("mean", t.mean);
  r.get("stddev", t.stddev);
  r.done();
}

void parse_domain(const json& j, const std::string& path, DomainAppearance& d) {
  Reader r(j, path);
  if (r.has("background")) parse_tissue(r.section("background"), path + "background.", d.background);
  else r.section("background");
  if (r.has("head")) parse_tissue(r.section("head"), path + "head.", d.head);
  else r.section("head");
  if (r.has("vs")) parse_tissue(r.section("vs"), path + "vs.", d.vs);
  else r.section("vs");
  if (r.has("cochlea")) parse_tissue(r.section("cochlea"), path + "cochlea.", d.cochlea);
  else r.section("cochlea");
  r.get("noise_sigma", d.noise_sigma);
  r.done();
}

void parse_segnet(const json& j, const std::string& path, SegNetConfig& c) {
  Reader r(j, path);
  r.get("dim", c.dim);
  r.get("patch", c.patch);
  r.get("n_downsamplings", c.n_downsamplings);
  r.get("base_channels", c.base_channels);
  r.get("channel_cap", c.channel_cap);
  r.get("strides", c.strides);
  r.get("leaky_slope", c.leaky_slope);
  r.get("ds_heads", c.ds_heads);
  r.get("n_classes", c.n_classes);
  r.done();
  if (c.strides.empty()) {
    c.strides = c.dim == 2 ? SegNetConfig::default2d().strides : SegNetConfig::default3d().strides;
    c.strides.resize(static_cast<size_t>(c.n_downsamplings),
                     c.dim == 2 ? std::array<int64_t, 3>{1, 2, 2} : std::array<int64_t, 3>{2, 2, 2});
  }
}

void parse_segtrain(const json& j, const std::string& path, SegTrainConfig& c) {
  Reader r(j, path);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("momentum", c.momentum);
  r.get("nesterov", c.nesterov);
  r.get("poly_power", c.poly_power);
  r.get("batch_size", c.batch_size);
  r.get("steps_per_epoch", c.steps_per_epoch);
  r.get("fg_oversample", c.fg_oversample);
  r.get("val_interval", c.val_interval);
  r.get("deep_supervision", c.deep_supervision);
  r.done();
}

}  // namespace

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  Reader root(j, "");
  root.get("output_root", c.output_root);
  root.get("jobs", c.jobs);
  root.get("seed", c.seed);

  {
    Reader r(root.section("data"), "data.");
    r.get("norm_lo", c.data.norm_lo);
    r.get("norm_hi", c.data.norm_hi);
    r.get_spacing("spacing", c.data.spacing);
    r.done();
  }
  {
    Reader r(root.section("phantom"), "phantom.");
    r.get("grid", c.phantom.spec.grid);
    r.get("spacing", c.phantom.spec.spacing);
    r.get("vs_radius_min_mm", c.phantom.spec.vs_radius_min_mm);
    r.get("vs_radius_max_mm", c.phantom.spec.vs_radius_max_mm);
    r.get("cochlea_radius_min_mm", c.phantom.spec.cochlea_radius_min_mm);
    r.get("cochlea_radius_max_mm", c.phantom.spec.cochlea_radius_max_mm);
    if (r.has("domain_a")) parse_domain(r.section("domain_a"), "phantom.domain_a.", c.phantom.spec.domain_a);
    else r.section("domain_a");
    if (r.has("domain_b")) parse_domain(r.section("domain_b"), "phantom.domain_b.", c.phantom.spec.domain_b);
    else r.section("domain_b");
    r.get("seed", c.phantom.spec.seed);
    r.get("cases_a", c.phantom.cases_a);
    r.get("cases_b", c.phantom.cases_b);
    r.done();
  }
  {
    Reader r(root.section("conversion"), "conversion.");
    {
      Reader g(r.section("generator"), "conversion.generator.");
      g.get("levels", c.conversion.generator.levels);
      g.get("base_channels", c.conversion.generator.base_channels);
      g.get("leaky_slope", c.conversion.generator.leaky_slope);
      g.get("residual", c.conversion.generator.residual);
      g.get("residual_scale", c.conversion.generator.residual_scale);
      g.done();
    }
    {
      Reader d(r.section("discriminator"), "conversion.discriminator.");
      d.get("layers", c.conversion.discriminator.layers);
      d.get("base_channels", c.conversion.discriminator.base_channels);
      d.done();
    }
    {
      Reader t(r.section("train"), "conversion.train.");
      t.get("epochs", c.conversion.train.epochs);
      t.get("lr", c.conversion.train.lr);
      t.get("lr_decay", c.conversion.train.lr_decay);
      t.get("seg_start_epoch", c.conversion.train.seg_start_epoch);
      t.get("batch_size", c.conversion.train.batch_size);
      t.get("steps_per_epoch", c.conversion.train.steps_per_epoch);
      t.get("seg_on_real_a", c.conversion.train.seg_on_real_a);
      t.get("d_loss_scale", c.conversion.train.d_loss_scale);
      t.done();
    }
    {
      Reader w(r.section("weights"), "conversion.weights.");
      w.get("adv", c.conversion.train.weights.adv);
      w.get("cyc", c.conversion.train.weights.cyc);
      w.get("id", c.conversion.train.weights.id);
      w.get("seg", c.conversion.train.weights.seg);
      w.done();
    }
    r.done();
  }
  {
    Reader r(root.section("segmentation"), "segmentation.");
    parse_segnet(r.section("net3d"), "segmentation.net3d.", c.segmentation.net3d);
    parse_segnet(r.section("net2d"), "segmentation.net2d.", c.segmentation.net2d);
    parse_segtrain(r.section("train3d"), "segmentation.train3d.", c.segmentation.train3d);
    parse_segtrain(r.section("train2d"), "segmentation.train2d.", c.segmentation.train2d);
    r.get("stage2_folds", c.segmentation.stage2_folds);
    r.done();
  }
  {
    Reader r(root.section("self_training"), "self_training.");
    r.get("k", c.self_training.k);
    r.get("n_2d", c.self_training.n_2d);
    r.get("n_3d", c.self_training.n_3d);
    r.get("confidence_threshold", c.self_training.confidence_threshold);
    r.done();
  }
  {
    Reader r(root.section("metrics"), "metrics.");
    r.get("classes", c.metrics.classes);
    r.done();
  }
  root.done();
  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void validate_config(const PipelineConfig& c) {
  if (!(c.data.norm_lo < c.data.norm_hi))
    throw ConfigError("data.norm_lo must be < data.norm_hi");
  if (c.data.spacing)
    for (double s : *c.data.spacing)
      if (!(s > 0)) throw ConfigError("data.spacing components must be strictly positive");
  validate(c.phantom.spec);
  if (c.phantom.cases_a < 1 || c.phantom.cases_b < 1)
    throw ConfigError("phantom case counts must be >= 1");
  validate(c.conversion.generator);
  validate(c.conversion.train);
  validate(c.segmentation.net3d);
  validate(c.segmentation.net2d);
  if (c.segmentation.net2d.dim != 2 || c.segmentation.net3d.dim != 3)
    throw ConfigError("segmentation.net2d/net3d dim fields are fixed to 2 and 3");
  validate(c.segmentation.train3d);
  validate(c.segmentation.train2d);
  if (c.segmentation.stage2_folds < 1) throw ConfigError("stage2_folds must be >= 1");
  if (c.self_training.k < 1) throw ConfigError("self_training.k must be >= 1");
  if (c.self_training.n_2d < 0 || c.self_training.n_3d < 0 ||
      c.self_training.n_2d + c.self_training.n_3d < 1)
    throw ConfigError("ensemble selection needs at least one fold");
  if (c.self_training.n_2d > c.self_training.k || c.self_training.n_3d > c.self_training.k)
    throw ConfigError("cannot select more folds than k");
  if (c.self_training.confidence_threshold < 0 || c.self_training.confidence_threshold >= 1)
    throw ConfigError("confidence_threshold must be in [0, 1)");
  for (int cls : c.metrics.classes)
    if (cls < 1 || cls >= LabelMap::kClasses)
      throw ConfigError("metrics.classes must name foreground classes (1 or 2)");
}

namespace {
json dump_tissue(const TissueStats& t) { return {{"mean", t.mean}, {"stddev", t.stddev}}; }

json dump_domain(const DomainAppearance& d) {
  return {{"background", dump_tissue(d.background)},
          {"head", dump_tissue(d.head)},
          {"vs", dump_tissue(d.vs)},
          {"cochlea", dump_tissue(d.cochlea)},
          {"noise_sigma", d.noise_sigma}};
}

json dump_segnet(const SegNetConfig& c) {
  return {{"dim", c.dim},
          {"patch", c.patch},
          {"n_downsamplings", c.n_downsamplings},
          {"base_channels", c.base_channels},
          {"channel_cap", c.channel_cap},
          {"strides", c.strides},
          {"leaky_slope", c.leaky_slope},
          {"ds_heads", c.ds_heads},
          {"n_classes", c.n_classes}};
}

json dump_segtrain(const SegTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"nesterov", c.nesterov},
          {"poly_power", c.poly_power},
          {"batch_size", c.batch_size},
          {"steps_per_epoch", c.steps_per_epoch},
          {"fg_oversample", c.fg_oversample},
          {"val_interval", c.val_interval},
          {"deep_supervision", c.deep_supervision}};
}
}  // namespace

json dump_config(const PipelineConfig& c) {
  json j;
  j["output_root"] = c.output_root;
  j["jobs"] = c.jobs;
  j["seed"] = c.seed;
  j["data"] = {{"norm_lo", c.data.norm_lo}, {"norm_hi", c.data.norm_hi}};
  if (c.data.spacing)
    j["data"]["spacing"] = *c.data.spacing;
  else
    j["data"]["spacing"] = nullptr;
  j["phantom"] = {{"grid", c.phantom.spec.grid},
                  {"spacing", c.phantom.spec.spacing},
                  {"vs_radius_min_mm", c.phantom.spec.vs_radius_min_mm},
                  {"vs_radius_max_mm", c.phantom.spec.vs_radius_max_mm},
                  {"cochlea_radius_min_mm", c.phantom.spec.cochlea_radius_min_mm},
                  {"cochlea_radius_max_mm", c.phantom.spec.cochlea_radius_max_mm},
                  {"domain_a", dump_domain(c.phantom.spec.domain_a)},
                  {"domain_b", dump_domain(c.phantom.spec.domain_b)},
                  {"seed", c.phantom.spec.seed},
                  {"cases_a", c.phantom.cases_a},
                  {"cases_b", c.phantom.cases_b}};
  j["conversion"] = {
      {"generator",
       {{"levels", c.conversion.generator.levels},
        {"base_channels", c.conversion.generator.base_channels},
        {"leaky_slope", c.conversion.generator.leaky_slope},
        {"residual", c.conversion.generator.residual},
        {"residual_scale", c.conversion.generator.residual_scale}}},
      {"discriminator",
       {{"layers", c.conversion.discriminator.layers},
        {"base_channels", c.conversion.discriminator.base_channels}}},
      {"train",
       {{"epochs", c.conversion.train.epochs},
        {"lr", c.conversion.train.lr},
        {"lr_decay", c.conversion.train.lr_decay},
        {"seg_start_epoch", c.conversion.train.seg_start_epoch},
        {"batch_size", c.conversion.train.batch_size},
        {"steps_per_epoch", c.conversion.train.steps_per_epoch},
        {"seg_on_real_a", c.conversion.train.seg_on_real_a},
        {"d_loss_scale", c.conversion.train.d_loss_scale}}},
      {"weights",
       {{"adv", c.conversion.train.weights.adv},
        {"cyc", c.conversion.train.weights.cyc},
        {"id", c.conversion.train.weights.id},
        {"seg", c.conversion.train.weights.seg}}}};
  j["segmentation"] = {{"net3d", dump_segnet(c.segmentation.net3d)},
                       {"net2d", dump_segnet(c.segmentation.net2d)},
                       {"train3d", dump_segtrain(c.segmentation.train3d)},
                       {"train2d", dump_segtrain(c.segmentation.train2d)},
                       {"stage2_folds", c.segmentation.stage2_folds}};
  j["self_training"] = {{"k", c.self_training.k},
                        {"n_2d", c.self_training.n_2d},
                        {"n_3d", c.self_training.n_3d},
                        {"confidence_threshold", c.self_training.confidence_threshold}};
  j["metrics"] = {{"classes", c.metrics.classes}};
  return j;
}

uint32_t config_hash(const PipelineConfig& c) {
  std::string s = dump_config(c).dump();
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

}  // namespace udaseg
