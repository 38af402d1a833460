#pragma once

// JSON configuration. Every error names the offending field as a JSON
// pointer, e.g. "/train/epochs: expected a positive integer".
//
// {
//   "dataset": {"n_train": 200, "n_test": 100, "side": 64, "contrast": 0.5,
//               "pixel_noise_sigma": 0.15, "seed": 0},
//   "dataset_dir": "optional/path/to/exported/dataset",
//   "train": {"epochs": 100, "batch_size": 16, "lr": 0.001, "adam_beta1": 0.9,
//             "adam_beta2": 0.999, "adam_eps": 1e-8, "nu_tilde_init": 0,
//             "tloss_epsilon": 1e-8, "hidden_dim": 16},
//   "losses": ["MSE", {"kind": "GCE", "q": 0.7, "name": "GCE"}],
//   "alphas": [0.0, 0.3, 0.5, 0.7],
//   "betas": [0.5, 0.7],
//   "seeds": [0, 1, 2],
//   "noise": {"alpha": 0.5, "beta": 0.7, "seed": 0}
// }
//
// All sections and keys are optional; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlosslab/baseline_losses.hpp"
#include "tlosslab/datagen.hpp"
#include "tlosslab/noise.hpp"
#include "tlosslab/trainer.hpp"

namespace tlosslab {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string pointer, const std::string& message)
        : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + message), pointer_(std::move(pointer)) {}

    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

/// A loss plus the label used for it in result files.
struct NamedLoss {
    std::string name;
    LossSpec spec;
};

struct SweepConfig {
    std::vector<NamedLoss> losses;
    std::vector<double> alphas{0.0, 0.3, 0.5, 0.7};
    std::vector<double> betas{0.5, 0.7};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    DatasetConfig dataset;
    std::optional<std::filesystem::path> dataset_dir;
    TrainConfig train;
    NoiseConfig noise;

    SweepConfig() {
        for (LossKind k : kAllLossKinds) {
            NamedLoss l;
            l.name = std::string(to_string(k));
            l.spec.kind = k;
            losses.push_back(l);
        }
    }
};

namespace config_detail {

using json = nlohmann::json;

inline std::string child(const std::string& ptr, std::string_view key) {
    // RFC 6901 escaping.
    std::string k;
    for (char c : key) {
        if (c == '~') k += "~0";
        else if (c == '/') k += "~1";
        else k += c;
    }
    return ptr + "/" + k;
}

inline std::string child(const std::string& ptr, std::size_t index) { return ptr + "/" + std::to_string(index); }

inline void require_object(const json& j, const std::string& ptr) {
    if (!j.is_object()) throw ConfigError(ptr, "expected an object");
}

inline void reject_unknown(const json& j, const std::string& ptr, std::initializer_list<std::string_view> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(child(ptr, it.key()), "unknown key");
    }
}

inline double number(const json& j, const std::string& ptr) {
    if (!j.is_number()) throw ConfigError(ptr, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(ptr, "expected a finite number");
    return v;
}

inline std::uint64_t uinteger(const json& j, const std::string& ptr) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        if (j.get<std::int64_t>() < 0) throw ConfigError(ptr, "expected a non-negative integer");
        return std::uint64_t(j.get<std::int64_t>());
    }
    throw ConfigError(ptr, "expected a non-negative integer");
}

inline std::size_t positive(const json& j, const std::string& ptr) {
    const std::uint64_t v = uinteger(j, ptr);
    if (v < 1) throw ConfigError(ptr, "expected a positive integer");
    return std::size_t(v);
}

template <typename F>
void read_if(const json& j, const std::string& ptr, std::string_view key, F&& assign) {
    const auto it = j.find(std::string(key));
    if (it != j.end()) assign(*it, child(ptr, key));
}

inline double in_range(double v, double lo, double hi, const std::string& ptr, const char* what) {
    if (!(v >= lo && v <= hi)) throw ConfigError(ptr, std::string("expected ") + what);
    return v;
}

}  // namespace config_detail

inline DatasetConfig parse_dataset_config(const nlohmann::json& j, const std::string& ptr = "/dataset") {
    using namespace config_detail;
    require_object(j, ptr);
    reject_unknown(j, ptr, {"n_train", "n_test", "side", "contrast", "pixel_noise_sigma", "seed"});
    DatasetConfig c;
    read_if(j, ptr, "n_train", [&](const json& v, const std::string& p) { c.n_train = positive(v, p); });
    read_if(j, ptr, "n_test", [&](const json& v, const std::string& p) { c.n_test = positive(v, p); });
    read_if(j, ptr, "side", [&](const json& v, const std::string& p) {
        c.side = positive(v, p);
        if (c.side < 16) throw ConfigError(p, "side must be >= 16");
    });
    read_if(j, ptr, "contrast", [&](const json& v, const std::string& p) {
        c.contrast = number(v, p);
        if (!(c.contrast > 0.0)) throw ConfigError(p, "contrast must be > 0");
    });
    read_if(j, ptr, "pixel_noise_sigma", [&](const json& v, const std::string& p) {
        c.pixel_noise_sigma = number(v, p);
        if (!(c.pixel_noise_sigma >= 0.0)) throw ConfigError(p, "pixel_noise_sigma must be >= 0");
    });
    read_if(j, ptr, "seed", [&](const json& v, const std::string& p) { c.seed = uinteger(v, p); });
    return c;
}

inline NoiseConfig parse_noise_config(const nlohmann::json& j, const std::string& ptr = "/noise") {
    using namespace config_detail;
    require_object(j, ptr);
    reject_unknown(j, ptr, {"alpha", "beta", "seed"});
    NoiseConfig c;
    read_if(j, ptr, "alpha", [&](const json& v, const std::string& p) { c.alpha = in_range(number(v, p), 0, 1, p, "a number in [0, 1]"); });
    read_if(j, ptr, "beta", [&](const json& v, const std::string& p) { c.beta = in_range(number(v, p), 0, 1, p, "a number in [0, 1]"); });
    read_if(j, ptr, "seed", [&](const json& v, const std::string& p) { c.seed = uinteger(v, p); });
    return c;
}

inline NamedLoss parse_loss(const nlohmann::json& j, const std::string& ptr) {
    using namespace config_detail;
    auto kind_from = [&](const json& v, const std::string& p) {
        if (!v.is_string()) throw ConfigError(p, "expected a loss name");
        const auto k = parse_loss_kind(v.get<std::string>());
        if (!k) throw ConfigError(p, "unknown loss '" + v.get<std::string>() + "'");
        return *k;
    };
    NamedLoss l;
    if (j.is_string()) {
        l.spec.kind = kind_from(j, ptr);
        l.name = std::string(to_string(l.spec.kind));
        return l;
    }
    if (!j.is_object()) throw ConfigError(ptr, "expected a loss name or object");
    reject_unknown(j, ptr, {"kind", "name", "q", "clampA", "sce_alpha", "sce_beta", "apl_active_w", "apl_passive_w"});
    if (!j.contains("kind")) throw ConfigError(child(ptr, "kind"), "required");
    l.spec.kind = kind_from(j["kind"], child(ptr, "kind"));
    l.name = std::string(to_string(l.spec.kind));
    read_if(j, ptr, "name", [&](const json& v, const std::string& p) {
        if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(p, "expected a non-empty string");
        l.name = v.get<std::string>();
    });
    read_if(j, ptr, "q", [&](const json& v, const std::string& p) {
        l.spec.q = number(v, p);
        if (!(l.spec.q > 0.0 && l.spec.q <= 1.0)) throw ConfigError(p, "expected a number in (0, 1]");
    });
    read_if(j, ptr, "clampA", [&](const json& v, const std::string& p) {
        l.spec.clampA = number(v, p);
        if (!(l.spec.clampA < 0.0)) throw ConfigError(p, "expected a negative number");
    });
    auto weight = [&](const char* key, double& dst) {
        read_if(j, ptr, key, [&](const json& v, const std::string& p) {
            dst = number(v, p);
            if (!(dst >= 0.0)) throw ConfigError(p, "expected a non-negative number");
        });
    };
    weight("sce_alpha", l.spec.sce_alpha);
    weight("sce_beta", l.spec.sce_beta);
    weight("apl_active_w", l.spec.apl_active_w);
    weight("apl_passive_w", l.spec.apl_passive_w);
    return l;
}

inline TrainConfig parse_train_config(const nlohmann::json& j, const std::string& ptr = "/train") {
    using namespace config_detail;
    require_object(j, ptr);
    reject_unknown(j, ptr, {"epochs", "batch_size", "lr", "adam_beta1", "adam_beta2", "adam_eps", "nu_tilde_init",
                            "tloss_epsilon", "hidden_dim", "loss", "seed"});
    TrainConfig c;
    read_if(j, ptr, "epochs", [&](const json& v, const std::string& p) { c.epochs = positive(v, p); });
    read_if(j, ptr, "batch_size", [&](const json& v, const std::string& p) { c.batch_size = positive(v, p); });
    read_if(j, ptr, "hidden_dim", [&](const json& v, const std::string& p) { c.hidden_dim = positive(v, p); });
    read_if(j, ptr, "lr", [&](const json& v, const std::string& p) {
        c.lr = number(v, p);
        if (!(c.lr >= 0.0)) throw ConfigError(p, "expected a non-negative number");
    });
    read_if(j, ptr, "adam_beta1", [&](const json& v, const std::string& p) {
        c.adam_beta1 = number(v, p);
        if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError(p, "expected a number in [0, 1)");
    });
    read_if(j, ptr, "adam_beta2", [&](const json& v, const std::string& p) {
        c.adam_beta2 = number(v, p);
        if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError(p, "expected a number in [0, 1)");
    });
    read_if(j, ptr, "adam_eps", [&](const json& v, const std::string& p) {
        c.adam_eps = number(v, p);
        if (!(c.adam_eps > 0.0)) throw ConfigError(p, "expected a positive number");
    });
    read_if(j, ptr, "nu_tilde_init", [&](const json& v, const std::string& p) { c.nu_tilde_init = number(v, p); });
    read_if(j, ptr, "tloss_epsilon", [&](const json& v, const std::string& p) {
        c.tloss_epsilon = number(v, p);
        if (!(c.tloss_epsilon > 0.0)) throw ConfigError(p, "expected a positive number");
    });
    read_if(j, ptr, "loss", [&](const json& v, const std::string& p) { c.loss = parse_loss(v, p).spec; });
    read_if(j, ptr, "seed", [&](const json& v, const std::string& p) { c.seed = uinteger(v, p); });
    return c;
}

inline SweepConfig parse_sweep_config(const nlohmann::json& j) {
    using namespace config_detail;
    const std::string root;
    require_object(j, root);
    reject_unknown(j, root, {"dataset", "dataset_dir", "train", "losses", "alphas", "betas", "seeds", "noise"});
    SweepConfig c;
    read_if(j, root, "dataset", [&](const json& v, const std::string& p) { c.dataset = parse_dataset_config(v, p); });
    read_if(j, root, "dataset_dir", [&](const json& v, const std::string& p) {
        if (!v.is_string()) throw ConfigError(p, "expected a path string");
        c.dataset_dir = std::filesystem::path(v.get<std::string>());
    });
    read_if(j, root, "train", [&](const json& v, const std::string& p) { c.train = parse_train_config(v, p); });
    read_if(j, root, "noise", [&](const json& v, const std::string& p) { c.noise = parse_noise_config(v, p); });

    auto non_empty_array = [](const json& v, const std::string& p) {
        if (!v.is_array()) throw ConfigError(p, "expected an array");
        if (v.empty()) throw ConfigError(p, "expected a non-empty array");
    };
    read_if(j, root, "losses", [&](const json& v, const std::string& p) {
        non_empty_array(v, p);
        c.losses.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            NamedLoss l = parse_loss(v[i], child(p, i));
            for (const auto& prev : c.losses)
                if (prev.name == l.name) throw ConfigError(child(p, i), "duplicate loss name '" + l.name + "'");
            c.losses.push_back(std::move(l));
        }
    });
    auto unit_list = [&](const char* key, std::vector<double>& dst) {
        read_if(j, root, key, [&](const json& v, const std::string& p) {
            non_empty_array(v, p);
            dst.clear();
            for (std::size_t i = 0; i < v.size(); ++i)
                dst.push_back(in_range(number(v[i], child(p, i)), 0, 1, child(p, i), "a number in [0, 1]"));
        });
    };
    unit_list("alphas", c.alphas);
    unit_list("betas", c.betas);
    read_if(j, root, "seeds", [&](const json& v, const std::string& p) {
        non_empty_array(v, p);
        c.seeds.clear();
        for (std::size_t i = 0; i < v.size(); ++i) c.seeds.push_back(uinteger(v[i], child(p, i)));
    });
    return c;
}

/// Parse JSON text; syntax errors are reported against the document root.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", source + " is not valid JSON: " + e.what());
    }
}

}  // namespace tlosslab
