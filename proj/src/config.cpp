#include "nisynth/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nisynth {

namespace {

struct Item {
    std::string text;
    bool quoted = false;
    int column = 0;  // 1-based column of the item's first character
};

struct Entry {
    std::string key;
    std::vector<std::vector<Item>> rows;  // ';' separates rows, ',' separates items
    int line = 0;
    int column = 0;
    bool used = false;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return std::string(s.substr(a, b - a));
}

std::vector<std::vector<Item>> split_value(std::string_view line, std::size_t start, int line_no) {
    std::vector<std::vector<Item>> rows(1);
    std::size_t i = start;
    auto skip_ws = [&] {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    };
    skip_ws();
    if (i >= line.size()) return {};
    while (true) {
        skip_ws();
        Item item;
        item.column = static_cast<int>(i) + 1;
        if (i < line.size() && line[i] == '"') {
            item.quoted = true;
            ++i;
            item.column = static_cast<int>(i) + 1;
            while (i < line.size() && line[i] != '"') item.text += line[i++];
            if (i >= line.size()) throw ConfigError("unterminated string", line_no, item.column - 1);
            ++i;
            skip_ws();
        } else {
            const std::size_t from = i;
            while (i < line.size() && line[i] != ',' && line[i] != ';' && line[i] != '#') ++i;
            item.text = trim(line.substr(from, i - from));
            if (item.text.empty()) throw ConfigError("empty list item", line_no, static_cast<int>(from) + 1);
        }
        rows.back().push_back(std::move(item));
        if (i >= line.size() || line[i] == '#') break;
        if (line[i] == ',') {
            ++i;
        } else if (line[i] == ';') {
            ++i;
            rows.emplace_back();
        } else {
            throw ConfigError("expected ',' or ';'", line_no, static_cast<int>(i) + 1);
        }
    }
    return rows;
}

std::vector<Section> tokenize(std::string_view text) {
    std::vector<Section> sections;
    std::set<std::string> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::size_t i = 0;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size() || line[i] == '#' || line[i] == '\r') continue;
        if (line[i] == '[') {
            const std::size_t close = line.find(']', i);
            if (close == std::string_view::npos) throw ConfigError("missing ']'", line_no, static_cast<int>(i) + 1);
            const std::string name = trim(line.substr(i + 1, close - i - 1));
            static const std::set<std::string> known{"plant",    "uncertainty", "storage", "analysis",
                                                     "simulate", "internal",    "output"};
            if (!known.contains(name)) throw ConfigError("unknown section [" + name + "]", line_no, static_cast<int>(i) + 1);
            if (!seen.insert(name).second) throw ConfigError("duplicate section [" + name + "]", line_no, static_cast<int>(i) + 1);
            const std::string rest = trim(line.substr(close + 1));
            if (!rest.empty() && rest[0] != '#')
                throw ConfigError("unexpected text after section header", line_no, static_cast<int>(close) + 2);
            sections.push_back({name, line_no, {}});
            continue;
        }
        if (sections.empty()) throw ConfigError("entry outside of a section", line_no, static_cast<int>(i) + 1);
        const std::size_t eq = line.find('=', i);
        if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no, static_cast<int>(i) + 1);
        Entry e;
        e.key = trim(line.substr(i, eq - i));
        e.line = line_no;
        e.column = static_cast<int>(i) + 1;
        if (e.key.empty()) throw ConfigError("missing key", line_no, e.column);
        for (const auto& other : sections.back().entries)
            if (other.key == e.key) throw ConfigError("duplicate key '" + e.key + "'", line_no, e.column);
        e.rows = split_value(line, eq + 1, line_no);
        if (e.rows.empty()) throw ConfigError("missing value for '" + e.key + "'", line_no, static_cast<int>(eq) + 2);
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

class Reader {
public:
    explicit Reader(Section* s) : s_(s) {}

    bool present() const { return s_ != nullptr; }
    int line() const { return s_ ? s_->line : 0; }

    Entry* find(const std::string& key) {
        if (!s_) return nullptr;
        for (auto& e : s_->entries)
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        return nullptr;
    }

    Entry& require(const std::string& key) {
        Entry* e = find(key);
        if (!e) throw ConfigError("[" + s_->name + "] is missing '" + key + "'", s_->line, 1);
        return *e;
    }

    void finish() const {
        if (!s_) return;
        for (const auto& e : s_->entries)
            if (!e.used) throw ConfigError("unknown key '" + e.key + "' in [" + s_->name + "]", e.line, e.column);
    }

private:
    Section* s_;
};

const std::vector<Item>& single_row(const Entry& e) {
    if (e.rows.size() != 1) throw ConfigError("'" + e.key + "' takes a list, not a matrix", e.line, e.column);
    return e.rows[0];
}

const Item& single(const Entry& e) {
    const auto& row = single_row(e);
    if (row.size() != 1) throw ConfigError("'" + e.key + "' takes a single value", e.line, e.column);
    return row[0];
}

double to_number(const Item& it, int line) {
    double v = 0.0;
    const char* b = it.text.data();
    const char* end = b + it.text.size();
    auto res = std::from_chars(b, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("expected a number, got '" + it.text + "'", line, it.column);
    return v;
}

Expr to_expr(const Item& it, int line) {
    try {
        return parse(it.text);
    } catch (const ParseError& e) {
        throw ConfigError(std::string("expression error: ") + e.what(), line, it.column + static_cast<int>(e.offset()));
    }
}

std::vector<std::string> names(const Entry& e) {
    std::vector<std::string> out;
    for (const auto& it : single_row(e)) out.push_back(it.text);
    return out;
}

std::vector<double> numbers(const Entry& e) {
    std::vector<double> out;
    for (const auto& it : single_row(e)) out.push_back(to_number(it, e.line));
    return out;
}

std::vector<Expr> exprs(const Entry& e) {
    std::vector<Expr> out;
    for (const auto& it : single_row(e)) out.push_back(to_expr(it, e.line));
    return out;
}

double number(const Entry& e) { return to_number(single(e), e.line); }

std::size_t count(const Entry& e) {
    const double v = number(e);
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("'" + e.key + "' must be a positive integer", e.line, e.column);
    return static_cast<std::size_t>(v);
}

bool boolean(const Entry& e) {
    const auto& t = single(e).text;
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    throw ConfigError("'" + e.key + "' must be true or false", e.line, e.column);
}

std::string word(const Entry& e) { return single(e).text; }

std::uint64_t seed_value(const Entry& e) {
    const Item& it = single(e);
    std::uint64_t v = 0;
    auto res = std::from_chars(it.text.data(), it.text.data() + it.text.size(), v);
    if (res.ec != std::errc() || res.ptr != it.text.data() + it.text.size())
        throw ConfigError("seed must be a nonnegative integer", e.line, it.column);
    return v;
}

void require_positive(double v, const Entry& e) {
    if (!(v > 0.0)) throw ConfigError("'" + e.key + "' must be positive", e.line, e.column);
}

}  // namespace

ScenarioConfig parse_config(std::string_view text, const std::string& source) {
    auto sections = tokenize(text);
    auto section = [&](const std::string& name) -> Section* {
        for (auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    };
    ScenarioConfig cfg;
    cfg.source = source;

    Reader plant(section("plant"));
    if (!plant.present()) throw ConfigError("missing [plant] section");
    cfg.states = names(plant.require("states"));
    cfg.f = exprs(plant.require("f"));
    cfg.h = exprs(plant.require("h"));
    for (std::size_t j = 1; j <= cfg.h.size(); ++j) cfg.g_columns.push_back(exprs(plant.require("g" + std::to_string(j))));
    if (auto* e = plant.find("outputs")) cfg.outputs = names(*e);
    if (auto* e = plant.find("equilibrium")) cfg.equilibrium = numbers(*e);
    if (auto* e = plant.find("T")) {
        const std::size_t p = cfg.h.size();
        if (e->rows.size() != p) throw ConfigError("T must have one row per output", e->line, e->column);
        Eigen::MatrixXd T(p, p);
        for (std::size_t i = 0; i < p; ++i) {
            if (e->rows[i].size() != p) throw ConfigError("T must be square", e->line, e->column);
            for (std::size_t j = 0; j < p; ++j) T(i, j) = to_number(e->rows[i][j], e->line);
        }
        cfg.T = T;
    }
    plant.finish();

    Reader unc(section("uncertainty"));
    if (unc.present()) {
        UncertaintyConfig u;
        u.states = names(unc.require("states"));
        u.inputs = names(unc.require("inputs"));
        u.f = exprs(unc.require("f"));
        u.h = exprs(unc.require("h"));
        u.V = to_expr(single(unc.require("V")), unc.require("V").line);
        unc.finish();
        cfg.uncertainty = std::move(u);
    }

    Reader storage(section("storage"));
    if (auto* e = storage.find("V1")) cfg.storage.V1 = to_expr(single(*e), e->line);
    if (auto* e = storage.find("V2")) cfg.storage.V2 = to_expr(single(*e), e->line);
    if (auto* e = storage.find("lambda")) {
        cfg.storage.lambda = number(*e);
        if (!(cfg.storage.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative", e->line, e->column);
    }
    storage.finish();

    Reader analysis(section("analysis"));
    if (auto* e = analysis.find("seed")) cfg.seed = seed_value(*e);
    if (auto* e = analysis.find("box")) {
        const auto hw = numbers(*e);
        const std::size_t n = cfg.states.size();
        if (hw.size() != 1 && hw.size() != n)
            throw ConfigError("box takes one half-width or one per state", e->line, e->column);
        Box b;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = hw.size() == 1 ? hw[0] : hw[i];
            if (!(w > 0.0)) throw ConfigError("box half-widths must be positive", e->line, e->column);
            b.lo.push_back(-w);
            b.hi.push_back(w);
        }
        cfg.sampling.box = b;
    }
    if (auto* e = analysis.find("samples")) cfg.sampling.samples = count(*e);
    if (auto* e = analysis.find("radius")) {
        cfg.sampling.radius = number(*e);
        require_positive(cfg.sampling.radius, *e);
    }
    if (auto* e = analysis.find("zero_tol")) cfg.sampling.zero_tol = number(*e);
    if (auto* e = analysis.find("det_tol")) cfg.sampling.det_tol = number(*e);
    if (auto* e = analysis.find("rank_tol")) cfg.sampling.rank_tol = number(*e);
    if (auto* e = analysis.find("screen_samples")) cfg.screen.samples = count(*e);
    if (auto* e = analysis.find("screen_box")) {
        cfg.screen.half_width = number(*e);
        require_positive(cfg.screen.half_width, *e);
    }
    if (auto* e = analysis.find("check_W")) cfg.check_W = boolean(*e);
    if (auto* e = analysis.find("osni_tol")) cfg.osni_tol = number(*e);
    if (auto* e = analysis.find("wdot_tol")) cfg.wdot_tol = number(*e);
    analysis.finish();

    Reader sim(section("simulate"));
    cfg.has_simulate = sim.present();
    if (sim.present()) {
        cfg.x0 = numbers(sim.require("x0"));
        if (auto* e = sim.find("xc0")) cfg.xc0 = numbers(*e);
        if (auto* e = sim.find("dt")) {
            cfg.integrator.dt = number(*e);
            require_positive(cfg.integrator.dt, *e);
        }
        auto& tf = sim.require("T_final");
        cfg.integrator.T_final = number(tf);
        if (!(cfg.integrator.T_final >= cfg.integrator.dt)) throw ConfigError("T_final must be at least dt", tf.line, tf.column);
        if (auto* e = sim.find("guard")) {
            cfg.integrator.guard = number(*e);
            require_positive(cfg.integrator.guard, *e);
        }
        if (auto* e = sim.find("step_doubling")) cfg.integrator.step_doubling = boolean(*e);
        if (auto* e = sim.find("mode")) {
            cfg.mode = word(*e);
            if (cfg.mode != "render" && cfg.mode != "stabilize" && cfg.mode != "robust" && cfg.mode != "open")
                throw ConfigError("mode must be render, stabilize, robust or open", e->line, e->column);
        }
        if (auto* e = sim.find("v")) cfg.input = exprs(*e);
        if (auto* e = sim.find("converge_tol")) {
            cfg.converge_tol = number(*e);
            require_positive(cfg.converge_tol, *e);
        }
        if (auto* e = sim.find("window")) {
            cfg.window = number(*e);
            if (!(cfg.window > 0.0 && cfg.window <= 1.0)) throw ConfigError("window must be in (0, 1]", e->line, e->column);
        }
        sim.finish();
        if (cfg.x0.size() != cfg.states.size())
            throw ConfigError("x0 must have one entry per plant state", sim.require("x0").line, 1);
        if (cfg.uncertainty && cfg.xc0.size() != cfg.uncertainty->states.size())
            throw ConfigError("xc0 must have one entry per uncertainty state", sim.line(), 1);
        if (!cfg.input.empty() && cfg.input.size() != cfg.h.size())
            throw ConfigError("v must have one entry per output", sim.line(), 1);
    }

    Reader internal(section("internal"));
    if (internal.present()) {
        InternalConfig ic;
        ic.dynamics.z = names(internal.require("z"));
        ic.dynamics.xi = names(internal.require("xi"));
        ic.dynamics.f = exprs(internal.require("f"));
        if (ic.dynamics.f.size() != ic.dynamics.z.size())
            throw ConfigError("[internal] f needs one expression per z state", internal.line(), 1);
        if (auto* e = internal.find("z0")) {
            for (const auto& row : e->rows) {
                std::vector<double> z0;
                for (const auto& it : row) z0.push_back(to_number(it, e->line));
                if (z0.size() != ic.dynamics.z.size()) throw ConfigError("each z0 row needs one entry per z state", e->line, e->column);
                ic.z0.push_back(z0);
            }
        }
        if (auto* e = internal.find("signal")) {
            for (const auto& row : e->rows) {
                std::vector<Expr> sig;
                for (const auto& it : row) sig.push_back(to_expr(it, e->line));
                if (sig.size() != ic.dynamics.xi.size())
                    throw ConfigError("each signal row needs one expression per xi input", e->line, e->column);
                ic.signals.push_back(sig);
            }
        }
        internal.finish();
        cfg.internal = std::move(ic);
    }

    Reader output(section("output"));
    if (auto* e = output.find("dir")) cfg.out_dir = word(*e);
    if (auto* e = output.find("csv")) cfg.csv = word(*e);
    if (auto* e = output.find("report")) cfg.report = word(*e);
    if (auto* e = output.find("plot")) cfg.plot = word(*e);
    output.finish();

    if (cfg.seed) {
        cfg.sampling.seed = *cfg.seed;
        cfg.screen.seed = *cfg.seed;
    }
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_config(ss.str(), path.filename().string());
    cfg.base_dir = path.parent_path();
    return cfg;
}

AffineSystem ScenarioConfig::build_plant() const {
    const std::size_t n = states.size();
    const std::size_t p = h.size();
    ExprMatrix g(n, p);
    for (std::size_t j = 0; j < p; ++j) {
        if (g_columns[j].size() != n)
            throw ModelError("g" + std::to_string(j + 1) + " must have one entry per state");
        for (std::size_t i = 0; i < n; ++i) g(i, j) = g_columns[j][i];
    }
    if (!T) return make_system(states, f, g, h, outputs, equilibrium);
    // With T the listed output names belong to the transformed outputs.
    AffineSystem sys = output_transform(make_system(states, f, g, h, {}, equilibrium), *T);
    if (!outputs.empty()) {
        if (outputs.size() != p) throw ModelError("output name count does not match output count");
        sys.output_names = outputs;
    }
    return sys;
}

std::optional<UncertaintyModel> ScenarioConfig::build_uncertainty() const {
    if (!uncertainty) return std::nullopt;
    return make_uncertainty(uncertainty->states, uncertainty->inputs, uncertainty->f, uncertainty->h, uncertainty->V,
                            screen);
}

}  // namespace nisynth
