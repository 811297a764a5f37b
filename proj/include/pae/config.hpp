#pragma once

// Run configuration: JSON parsing with strict key checking, validation, and a
// canonical JSON echo (sorted keys) stored in checkpoints.

#include <nlohmann/json.hpp>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pae/datagen.hpp"
#include "pae/inversion.hpp"
#include "pae/paired.hpp"
#include "pae/variational.hpp"

namespace pae {

using Json = nlohmann::json;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DataConfig {
    std::string source = "shapes";  // shapes | idx
    std::string path;               // IDX image file when source == idx
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t train = 2000;
    std::size_t validation = 320;
    std::size_t calibration = 320;
};

enum class ModelKind { paired, linear, identity, vpae, latent_map };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::paired: return "paired";
        case ModelKind::linear: return "linear";
        case ModelKind::identity: return "identity";
        case ModelKind::vpae: return "vpae";
        case ModelKind::latent_map: return "latent_map";
    }
    return "paired";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    for (auto k : {ModelKind::paired, ModelKind::linear, ModelKind::identity, ModelKind::vpae, ModelKind::latent_map}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("model.kind: unknown kind '" + s + "'");
}

struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    CorruptionSpec corruption = CorruptionSpec::pixels(0.5);
    CorruptionSpec ood_corruption = CorruptionSpec::block_deletion(5, 8);
    ModelKind kind = ModelKind::paired;
    ModelSpec model;
    double sigma = 1.0;
    TrainConfig train;
    LatentMapConfig latent_map;
    LsiConfig lsi;

    // `check_paths` also requires referenced files to exist.
    void validate(bool check_paths = true) const;
};

namespace detail {

class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <std::unsigned_integral U>
    void get(const std::string& key, U& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_unsigned()) throw ConfigError(where(key) + "expected a nonnegative integer");
            out = v->get<U>();
        }
    }
    void get(const std::string& key, double& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(where(key) + "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, std::optional<double>& out) {
        if (const Json* v = find(key)) {
            if (v->is_null()) {
                out.reset();
            } else if (v->is_number()) {
                out = v->get<double>();
            } else {
                throw ConfigError(where(key) + "expected a number or null");
            }
        }
    }
    void get(const std::string& key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(where(key) + "expected a boolean");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(where(key) + "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, std::vector<std::size_t>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + "expected an array of integers");
            std::vector<std::size_t> tmp;
            for (const auto& e : *v) {
                if (!e.is_number_unsigned()) throw ConfigError(where(key) + "expected an array of nonnegative integers");
                tmp.push_back(e.get<std::size_t>());
            }
            out = std::move(tmp);
        }
    }

    [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(where() + "unknown key '" + item.key() + "'");
        }
    }

private:
    [[nodiscard]] std::string where(const std::string& key = {}) const {
        const std::string p = key.empty() ? path_ : child(key);
        return p.empty() ? std::string("config: ") : p + ": ";
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string corruption_kind_name(CorruptionSpec::Kind k) {
    switch (k) {
        case CorruptionSpec::Kind::none: return "none";
        case CorruptionSpec::Kind::pixel_bernoulli: return "bernoulli";
        case CorruptionSpec::Kind::blocks: return "blocks";
    }
    return "none";
}

inline CorruptionSpec parse_corruption(const Json& j, const std::string& path, CorruptionSpec spec) {
    ObjectReader r(j, path);
    std::string kind = corruption_kind_name(spec.kind);
    r.get("kind", kind);
    if (kind == "none") {
        spec.kind = CorruptionSpec::Kind::none;
    } else if (kind == "bernoulli") {
        spec.kind = CorruptionSpec::Kind::pixel_bernoulli;
    } else if (kind == "blocks") {
        spec.kind = CorruptionSpec::Kind::blocks;
    } else {
        throw ConfigError(path + ".kind: expected none, bernoulli or blocks");
    }
    r.get("p", spec.p);
    r.get("count", spec.count);
    r.get("size", spec.size);
    r.get("snr_db", spec.snr_db);
    r.finish();
    return spec;
}

inline Json corruption_json(const CorruptionSpec& c) {
    return Json{{"kind", corruption_kind_name(c.kind)},
                {"p", c.p},
                {"count", c.count},
                {"size", c.size},
                {"snr_db", c.snr_db ? Json(*c.snr_db) : Json(nullptr)}};
}

inline std::string map_kind_name(MapKind k) {
    switch (k) {
        case MapKind::linear: return "linear";
        case MapKind::identity: return "identity";
        case MapKind::mlp: return "mlp";
    }
    return "linear";
}

inline std::string loss_name(LossVariant v) {
    switch (v) {
        case LossVariant::combined: return "combined";
        case LossVariant::full_mappings: return "full_mappings";
        case LossVariant::latent_mappings: return "latent_mappings";
    }
    return "combined";
}

template <typename Enum, typename NameFn>
Enum enum_from_name(const std::string& s, NameFn name, std::initializer_list<Enum> all, const std::string& path) {
    for (Enum e : all) {
        if (name(e) == s) return e;
    }
    throw ConfigError(path + ": unknown value '" + s + "'");
}

inline Activation parse_activation(const std::string& s, const std::string& path) {
    try {
        return activation_from_string(s);
    } catch (const std::invalid_argument&) {
        throw ConfigError(path + ": unknown activation '" + s + "'");
    }
}

}  // namespace detail

inline RunConfig parse_config(const Json& j, bool check_paths = true) {
    RunConfig c;
    detail::ObjectReader root(j, "");
    root.get("seed", c.seed);

    if (const Json* d = root.find("data")) {
        detail::ObjectReader r(*d, "data");
        r.get("source", c.data.source);
        r.get("path", c.data.path);
        r.get("height", c.data.height);
        r.get("width", c.data.width);
        r.get("train", c.data.train);
        r.get("validation", c.data.validation);
        r.get("calibration", c.data.calibration);
        r.finish();
    }
    if (const Json* v = root.find("corruption")) c.corruption = detail::parse_corruption(*v, "corruption", c.corruption);
    if (const Json* v = root.find("ood_corruption")) {
        c.ood_corruption = detail::parse_corruption(*v, "ood_corruption", c.ood_corruption);
    }
    if (const Json* m = root.find("model")) {
        detail::ObjectReader r(*m, "model");
        std::string kind = to_string(c.kind), act = to_string(c.model.activation), out = to_string(c.model.output);
        std::string map = detail::map_kind_name(c.model.map_kind);
        r.get("kind", kind);
        r.get("latent_x", c.model.latent_x);
        r.get("latent_y", c.model.latent_y);
        r.get("hidden", c.model.hidden);
        r.get("activation", act);
        r.get("output", out);
        r.get("map", map);
        r.get("map_hidden", c.model.map_hidden);
        r.get("sigma", c.sigma);
        r.finish();
        c.kind = model_kind_from_string(kind);
        c.model.activation = detail::parse_activation(act, "model.activation");
        c.model.output = detail::parse_activation(out, "model.output");
        c.model.map_kind = detail::enum_from_name<MapKind>(map, detail::map_kind_name,
                                                           {MapKind::linear, MapKind::identity, MapKind::mlp}, "model.map");
    }
    if (const Json* t = root.find("train")) {
        detail::ObjectReader r(*t, "train");
        std::string loss = detail::loss_name(c.train.variant);
        r.get("alpha_x", c.train.alpha_x);
        r.get("alpha_y", c.train.alpha_y);
        r.get("alpha_m", c.train.alpha_m);
        r.get("alpha_m_inv", c.train.alpha_m_inv);
        r.get("lr", c.train.lr);
        r.get("epochs", c.train.epochs);
        r.get("batch_size", c.train.batch_size);
        r.get("loss", loss);
        r.get("two_stage", c.train.two_stage);
        r.finish();
        c.train.variant = detail::enum_from_name<LossVariant>(
            loss, detail::loss_name,
            {LossVariant::combined, LossVariant::full_mappings, LossVariant::latent_mappings}, "train.loss");
    }
    if (const Json* t = root.find("latent_map")) {
        detail::ObjectReader r(*t, "latent_map");
        r.get("hidden", c.latent_map.hidden);
        r.get("lr", c.latent_map.lr);
        r.get("epochs", c.latent_map.epochs);
        r.get("batch_size", c.latent_map.batch_size);
        r.get("sigma", c.latent_map.sigma);
        r.get("fixed_log_std", c.latent_map.fixed_log_std);
        r.finish();
    }
    if (const Json* t = root.find("lsi")) {
        detail::ObjectReader r(*t, "lsi");
        r.get("steps", c.lsi.steps);
        r.get("lr", c.lsi.lr);
        r.get("alpha", c.lsi.alpha);
        r.get("warm_start", c.lsi.warm_start);
        r.finish();
    }
    root.finish();
    c.validate(check_paths);
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

inline Json to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["data"] = Json{{"source", c.data.source},   {"path", c.data.path},
                     {"height", c.data.height},   {"width", c.data.width},
                     {"train", c.data.train},     {"validation", c.data.validation},
                     {"calibration", c.data.calibration}};
    j["corruption"] = detail::corruption_json(c.corruption);
    j["ood_corruption"] = detail::corruption_json(c.ood_corruption);
    j["model"] = Json{{"kind", to_string(c.kind)},
                      {"latent_x", c.model.latent_x},
                      {"latent_y", c.model.latent_y},
                      {"hidden", c.model.hidden},
                      {"activation", to_string(c.model.activation)},
                      {"output", to_string(c.model.output)},
                      {"map", detail::map_kind_name(c.model.map_kind)},
                      {"map_hidden", c.model.map_hidden},
                      {"sigma", c.sigma}};
    j["train"] = Json{{"alpha_x", c.train.alpha_x},
                      {"alpha_y", c.train.alpha_y},
                      {"alpha_m", c.train.alpha_m},
                      {"alpha_m_inv", c.train.alpha_m_inv},
                      {"lr", c.train.lr},
                      {"epochs", c.train.epochs},
                      {"batch_size", c.train.batch_size},
                      {"loss", detail::loss_name(c.train.variant)},
                      {"two_stage", c.train.two_stage}};
    j["latent_map"] = Json{{"hidden", c.latent_map.hidden},
                           {"lr", c.latent_map.lr},
                           {"epochs", c.latent_map.epochs},
                           {"batch_size", c.latent_map.batch_size},
                           {"sigma", c.latent_map.sigma},
                           {"fixed_log_std", c.latent_map.fixed_log_std ? Json(*c.latent_map.fixed_log_std) : Json(nullptr)}};
    j["lsi"] = Json{{"steps", c.lsi.steps}, {"lr", c.lsi.lr}, {"alpha", c.lsi.alpha}, {"warm_start", c.lsi.warm_start}};
    return j;
}

inline void RunConfig::validate(bool check_paths) const {
    if (data.source != "shapes" && data.source != "idx") throw ConfigError("data.source: expected shapes or idx");
    if (data.source == "idx") {
        if (data.path.empty()) throw ConfigError("data.path: required when data.source is idx");
        if (check_paths && !std::filesystem::is_regular_file(data.path)) throw ConfigError("data.path: no such file '" + data.path + "'");
    } else if (data.height == 0 || data.width == 0) {
        throw ConfigError("data: height and width must be positive");
    }
    for (const auto* c : {&corruption, &ood_corruption}) {
        const std::string name = c == &corruption ? "corruption" : "ood_corruption";
        if (!(c->p >= 0.0 && c->p <= 1.0)) throw ConfigError(name + ".p: must lie in [0, 1]");
        if (c->kind == CorruptionSpec::Kind::blocks && data.source == "shapes" &&
            (c->size == 0 || c->size > std::min(data.height, data.width))) {
            throw ConfigError(name + ".size: block size must be in [1, min(height, width)]");
        }
        if (c->snr_db && !std::isfinite(*c->snr_db)) throw ConfigError(name + ".snr_db: must be finite");
    }
    if (model.latent_x == 0 || model.latent_y == 0) throw ConfigError("model: latent dims must be positive");
    for (auto w : model.hidden) {
        if (w == 0) throw ConfigError("model.hidden: widths must be positive");
    }
    if (model.map_kind == MapKind::identity && model.latent_x != model.latent_y) {
        throw ConfigError("model.map: identity maps require latent_x == latent_y");
    }
    if (!(sigma > 0.0)) throw ConfigError("model.sigma: must be positive");
    try {
        train.validate();
        lsi.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(latent_map.sigma > 0.0)) throw ConfigError("latent_map.sigma: must be positive");
    if (!(latent_map.lr >= 0.0) || latent_map.batch_size == 0) throw ConfigError("latent_map: invalid lr or batch_size");
}

}  // namespace pae
