// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <variant>

namespace purify {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

using FieldRef = std::variant<std::string ExperimentConfig::*, double ExperimentConfig::*,
                              std::int64_t ExperimentConfig::*, std::uint64_t ExperimentConfig::*>;

struct Field {
    const char* section;
    const char* key;
    FieldRef ref;
};

// Canonical field order; one row per scalar config field.
const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"run", "seed", &ExperimentConfig::seed},
        {"data", "kind", &ExperimentConfig::data_kind},
        {"data", "n", &ExperimentConfig::data_n},
        {"data", "clusters_per_class", &ExperimentConfig::clusters_per_class},
        {"data", "cluster_radius", &ExperimentConfig::cluster_radius},
        {"data", "cluster_sigma", &ExperimentConfig::cluster_sigma},
        {"data", "csv_path", &ExperimentConfig::csv_path},
        {"schedule", "T", &ExperimentConfig::schedule_T},
        {"schedule", "alpha_min", &ExperimentConfig::alpha_min},
        {"schedule", "alpha_max", &ExperimentConfig::alpha_max},
        {"schedule", "eta", &ExperimentConfig::eta},
        {"purifier", "t_star", &ExperimentConfig::t_star},
        {"purifier", "tau_stride", &ExperimentConfig::tau_stride},
        {"purifier", "denoiser", &ExperimentConfig::denoiser_kind},
        {"purifier", "denoiser_checkpoint", &ExperimentConfig::denoiser_checkpoint},
        {"classifier", "depth", &ExperimentConfig::classifier_depth},
        {"classifier", "width", &ExperimentConfig::classifier_width},
        {"classifier", "epochs", &ExperimentConfig::classifier_epochs},
        {"classifier", "lr", &ExperimentConfig::classifier_lr},
        {"classifier", "batch", &ExperimentConfig::classifier_batch},
        {"classifier", "checkpoint", &ExperimentConfig::classifier_checkpoint},
        {"denoiser", "depth", &ExperimentConfig::denoiser_depth},
        {"denoiser", "width", &ExperimentConfig::denoiser_width},
        {"denoiser", "embed_dim", &ExperimentConfig::denoiser_embed_dim},
        {"denoiser", "epochs", &ExperimentConfig::denoiser_epochs},
        {"denoiser", "lr", &ExperimentConfig::denoiser_lr},
        {"evaluation", "points", &ExperimentConfig::eval_points},
        {"evaluation", "sweep_t_stars", &ExperimentConfig::sweep_t_stars},
        {"evaluation", "grid_lo", &ExperimentConfig::grid_lo},
        {"evaluation", "grid_hi", &ExperimentConfig::grid_hi},
        {"evaluation", "grid_resolution", &ExperimentConfig::grid_resolution},
        {"evaluation", "grid_realizations", &ExperimentConfig::grid_realizations},
        {"evaluation", "compare_stride", &ExperimentConfig::compare_stride},
    };
    return f;
}

void assign_field(ExperimentConfig& cfg, const Field& f, const std::string& value,
                  const std::string& where) {
    try {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    cfg.*member = value;
                } else if constexpr (std::is_same_v<T, double>) {
                    std::size_t pos = 0;
                    cfg.*member = std::stod(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("trailing characters");
                } else if constexpr (std::is_same_v<T, std::int64_t>) {
                    std::size_t pos = 0;
                    cfg.*member = std::stoll(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("trailing characters");
                } else {
                    std::size_t pos = 0;
                    cfg.*member = std::stoull(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("trailing characters");
                }
            },
            f.ref);
    } catch (const std::exception&) {
        throw ConfigError(where, "cannot parse value '" + value + "'");
    }
}

std::string field_value(const ExperimentConfig& cfg, const Field& f) {
    return std::visit(
        [&](auto member) -> std::string {
            using T = std::remove_cvref_t<decltype(cfg.*member)>;
            if constexpr (std::is_same_v<T, std::string>) return cfg.*member;
            else if constexpr (std::is_same_v<T, double>) return fmt_double(cfg.*member);
            else return std::to_string(cfg.*member);
        },
        f.ref);
}

const std::vector<AttackSpec>& default_attacks() {
    // The four-threat white+EOT grid, radii scaled to the 2D task.
    static const std::vector<AttackSpec> grid = [] {
        std::vector<AttackSpec> g(4);
        g[0].norm = Norm::kLinf, g[0].epsilon = 0.25;
        g[1].norm = Norm::kLinf, g[1].epsilon = 0.5;
        g[2].norm = Norm::kL2, g[2].epsilon = 1.0;
        g[3].norm = Norm::kL2, g[3].epsilon = 2.0;
        return g;
    }();
    return grid;
}

AttackKind parse_kind(const std::string& v, const std::string& where) {
    if (v == "white") return AttackKind::kWhite;
    if (v == "grey") return AttackKind::kGrey;
    if (v == "bpda") return AttackKind::kBpda;
    throw ConfigError(where, "mode must be white, grey or bpda, got '" + v + "'");
}

}  // namespace

std::string AttackSpec::name() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", epsilon);
    return std::string(attack_kind_name(kind)) + "_" + norm_name(norm) + "_" + buf;
}

std::string AttackSpec::to_line() const {
    std::string out = "mode=";
    out += kind == AttackKind::kWhite ? "white" : (kind == AttackKind::kGrey ? "grey" : "bpda");
    out += " norm=";
    out += norm_name(norm);
    out += " eps=" + fmt_double(epsilon);
    out += " steps=" + std::to_string(steps);
    out += " step_size=" + fmt_double(step_size);
    out += " eot=" + std::to_string(eot);
    out += std::string(" resample=") + (resample_per_iter ? "iter" : "once");
    out += " votes=" + std::to_string(votes);
    return out;
}

AttackConfig AttackSpec::to_config() const {
    AttackConfig cfg;
    cfg.threat.norm = norm;
    cfg.threat.epsilon = epsilon;
    cfg.steps = steps;
    cfg.step_size = step_size;
    cfg.eot_samples = eot;
    cfg.resample_per_iter = resample_per_iter;
    cfg.vote_realizations = votes;
    cfg.gradient_mode = kind == AttackKind::kGrey
                            ? GradientMode::kGrey
                            : (kind == AttackKind::kBpda ? GradientMode::kBpda : GradientMode::kWhite);
    return cfg;
}

AttackSpec AttackSpec::parse(const std::string& line) {
    AttackSpec spec;
    std::stringstream ss(line);
    std::string token;
    const std::string where = "attacks.attack";
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where, "expected key=value tokens, got '" + token + "'");
        const std::string k = token.substr(0, eq);
        const std::string v = token.substr(eq + 1);
        try {
            if (k == "mode") spec.kind = parse_kind(v, where);
            else if (k == "norm") {
                if (v == "l2") spec.norm = Norm::kL2;
                else if (v == "linf") spec.norm = Norm::kLinf;
                else throw ConfigError(where, "norm must be l2 or linf, got '" + v + "'");
            } else if (k == "eps") spec.epsilon = std::stod(v);
            else if (k == "steps") spec.steps = std::stoi(v);
            else if (k == "step_size") spec.step_size = std::stod(v);
            else if (k == "eot") spec.eot = std::stoi(v);
            else if (k == "resample") {
                if (v == "iter") spec.resample_per_iter = true;
                else if (v == "once") spec.resample_per_iter = false;
                else throw ConfigError(where, "resample must be iter or once");
            } else if (k == "votes") spec.votes = std::stoi(v);
            else throw ConfigError(where, "unknown attack key '" + k + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(where, "cannot parse '" + token + "'");
        }
    }
    return spec;
}

std::vector<int> ExperimentConfig::sweep_values() const {
    std::vector<int> out;
    if (sweep_t_stars.empty()) {
        for (int t = 0; t <= static_cast<int>(schedule_T); ++t) out.push_back(t);
        return out;
    }
    std::stringstream ss(sweep_t_stars);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (cell.empty()) continue;
        try {
            out.push_back(std::stoi(cell));
        } catch (const std::exception&) {
            throw ConfigError("evaluation.sweep_t_stars", "cannot parse '" + cell + "'");
        }
    }
    if (out.empty()) throw ConfigError("evaluation.sweep_t_stars", "empty sweep list");
    return out;
}

ExperimentConfig parse_config(const std::string& text, std::vector<std::string>* defaulted) {
    ExperimentConfig cfg;
    std::set<std::string> assigned;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no), "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string where = section + "." + key;

        if (section == "attacks" && key == "attack") {
            cfg.attacks.push_back(AttackSpec::parse(value));
            assigned.insert("attacks.attack");
            continue;
        }
        bool found = false;
        for (const Field& f : fields()) {
            if (section == f.section && key == f.key) {
                assign_field(cfg, f, value, where);
                assigned.insert(where);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError(where, "unknown config field");
    }
    if (cfg.attacks.empty()) cfg.attacks = default_attacks();
    if (defaulted) {
        defaulted->clear();
        for (const Field& f : fields()) {
            const std::string name = std::string(f.section) + "." + f.key;
            if (!assigned.count(name)) defaulted->push_back(name);
        }
        if (!assigned.count("attacks.attack")) defaulted->push_back("attacks.attack");
    }
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment,
                    std::vector<std::string>* defaulted) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set", "expected section.key=value, got '" + assignment + "'");
    const std::string path = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos)
        throw ConfigError("--set", "expected section.key=value, got '" + assignment + "'");
    const std::string section = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);
    if (section == "attacks" && key == "attack") {
        cfg.attacks.clear();
        cfg.attacks.push_back(AttackSpec::parse(value));
    } else {
        bool found = false;
        for (const Field& f : fields()) {
            if (section == f.section && key == f.key) {
                assign_field(cfg, f, value, path);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError(path, "unknown config field");
    }
    if (defaulted)
        defaulted->erase(std::remove(defaulted->begin(), defaulted->end(), path), defaulted->end());
}

std::string canonical_config(const ExperimentConfig& cfg,
                             const std::vector<std::string>& defaulted) {
    std::string out;
    std::string section;
    for (const Field& f : fields()) {
        if (section != f.section) {
            section = f.section;
            if (!out.empty()) out += "\n";
            out += "[" + section + "]\n";
        }
        out += std::string(f.key) + " = " + field_value(cfg, f) + "\n";
    }
    out += "\n[attacks]\n";
    for (const AttackSpec& a : cfg.attacks) out += "attack = " + a.to_line() + "\n";
    std::vector<std::string> sorted = defaulted;
    std::sort(sorted.begin(), sorted.end());
    out += "\n# defaulted:";
    if (sorted.empty()) out += " (none)";
    for (const std::string& d : sorted) out += " " + d;
    out += "\n";
    return out;
}

std::uint64_t fnv64_str(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void validate_config(const ExperimentConfig& cfg, const std::string& command) {
    namespace fs = std::filesystem;
    auto require = [](bool ok, const std::string& field, const std::string& msg) {
        if (!ok) throw ConfigError(field, msg);
    };

    require(cfg.data_kind == "gmm" || cfg.data_kind == "csv", "data.kind",
            "must be 'gmm' or 'csv', got '" + cfg.data_kind + "'");
    require(cfg.data_n > 0, "data.n", "must be > 0");
    if (cfg.data_kind == "gmm") {
        require(cfg.clusters_per_class >= 1, "data.clusters_per_class", "must be >= 1");
        require(cfg.cluster_radius > 0, "data.cluster_radius", "must be > 0");
        require(cfg.cluster_sigma > 0, "data.cluster_sigma", "must be > 0");
    } else {
        require(!cfg.csv_path.empty(), "data.csv_path", "required for csv data");
        require(fs::exists(cfg.csv_path), "data.csv_path", "no such file: " + cfg.csv_path);
    }

    require(cfg.schedule_T >= 1, "schedule.T", "must be >= 1");
    require(cfg.alpha_min > 0, "schedule.alpha_min", "must be > 0");
    require(cfg.alpha_min < std::min(cfg.alpha_max, 1.0 - 1e-9), "schedule.alpha_min",
            "must be < alpha_max after clamping");
    require(cfg.eta >= 0 && cfg.eta <= 1, "schedule.eta", "must be in [0,1]");

    require(cfg.t_star >= 0 && cfg.t_star <= cfg.schedule_T, "purifier.t_star",
            "must be in [0, schedule.T]");
    require(cfg.tau_stride >= 1, "purifier.tau_stride", "must be >= 1");
    require(cfg.denoiser_kind == "analytic" || cfg.denoiser_kind == "mlp", "purifier.denoiser",
            "must be 'analytic' or 'mlp'");
    if (cfg.denoiser_kind == "analytic")
        require(cfg.data_kind == "gmm", "purifier.denoiser",
                "the analytic score needs the known gmm data distribution");

    require(cfg.classifier_depth >= 0, "classifier.depth", "must be >= 0");
    require(cfg.classifier_depth == 0 || cfg.classifier_width >= 1, "classifier.width",
            "must be >= 1");
    require(cfg.classifier_epochs >= 0, "classifier.epochs", "must be >= 0");
    require(cfg.classifier_lr > 0, "classifier.lr", "must be > 0");

    require(cfg.denoiser_depth >= 0, "denoiser.depth", "must be >= 0");
    require(cfg.denoiser_width >= 1, "denoiser.width", "must be >= 1");
    require(cfg.denoiser_embed_dim >= 1, "denoiser.embed_dim", "must be >= 1");
    require(cfg.denoiser_epochs >= 0, "denoiser.epochs", "must be >= 0");
    require(cfg.denoiser_lr > 0, "denoiser.lr", "must be > 0");

    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        const std::string where = "attacks.attack[" + std::to_string(i) + "]";
        const AttackSpec& a = cfg.attacks[i];
        require(a.epsilon > 0, where, "eps must be > 0");
        require(a.steps >= 1, where, "steps must be >= 1");
        require(a.eot >= 1, where, "eot must be >= 1");
        require(a.votes >= 1 && a.votes % 2 == 1, where, "votes must be odd and >= 1");
    }

    require(cfg.eval_points > 0, "evaluation.points", "must be > 0");
    require(cfg.grid_hi > cfg.grid_lo, "evaluation.grid_hi", "must be > grid_lo");
    require(cfg.grid_resolution >= 32, "evaluation.grid_resolution", "must be >= 32");
    require(cfg.grid_realizations >= 1, "evaluation.grid_realizations", "must be >= 1");
    require(cfg.compare_stride >= 1, "evaluation.compare_stride", "must be >= 1");
    if (!cfg.sweep_t_stars.empty()) {
        for (int t : cfg.sweep_values())
            require(t >= 0 && t <= cfg.schedule_T, "evaluation.sweep_t_stars",
                    "value " + std::to_string(t) + " outside [0, schedule.T]");
    }

    // Command-specific checkpoint requirements, checked before any computation.
    const bool needs_classifier = command == "attack" || command == "eval" ||
                                  command == "sweep-depth" || command == "boundary-grid" ||
                                  command == "compare-sampling";
    if (needs_classifier) {
        require(!cfg.classifier_checkpoint.empty(), "classifier.checkpoint",
                "required for " + command);
        require(fs::exists(cfg.classifier_checkpoint), "classifier.checkpoint",
                "no such file: " + cfg.classifier_checkpoint);
    }
    const bool needs_denoiser =
        (needs_classifier || command == "purify") && cfg.denoiser_kind == "mlp" && cfg.t_star > 0;
    if (needs_denoiser) {
        require(!cfg.denoiser_checkpoint.empty(), "purifier.denoiser_checkpoint",
                "required for mlp denoiser");
        require(fs::exists(cfg.denoiser_checkpoint), "purifier.denoiser_checkpoint",
                "no such file: " + cfg.denoiser_checkpoint);
    }
}

}  // namespace purify
