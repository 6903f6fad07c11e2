#include "nisynth/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nisynth {

const char* to_string(Command c) {
    switch (c) {
        case Command::Analyze:
            return "analyze";
        case Command::Synthesize:
            return "synthesize";
        case Command::Simulate:
            return "simulate";
        case Command::Verify:
            return "verify";
    }
    return "?";
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << contents;
        if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

std::string gnuplot_script(const std::string& csv, const std::string& image, std::size_t n, std::size_t nc) {
    std::ostringstream s;
    s << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set xlabel 't'\n"
      << "set ylabel 'state'\n"
      << "set grid\n"
      << "set terminal pngcairo size 1000,600\n"
      << "set output '" << image << "'\n"
      << "plot for [i=2:" << (1 + n + nc) << "] '" << csv << "' using 1:i with lines lw 2\n";
    return s.str();
}

namespace {

using json = nlohmann::ordered_json;

json point_json(const std::vector<double>& p) {
    json a = json::array();
    for (double v : p) a.push_back(v);
    return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json verdict_json(const Verdict& v) {
    json j;
    j["status"] = to_string(v.status);
    if (!v.note.empty()) j["note"] = v.note;
    if (v.witness) {
        json w;
        w["point"] = point_json(v.witness->point);
        if (v.witness->pair) w["pair"] = {v.witness->pair->first + 1, v.witness->pair->second + 1};
        if (!v.witness->detail.empty()) w["detail"] = v.witness->detail;
        j["witness"] = w;
    }
    return j;
}

json screen_json(const ScreenResult& r, const std::vector<std::string>& vars, Definiteness mode) {
    json j;
    j["status"] = r.pass ? "pass" : "fail";
    j["mode"] = mode == Definiteness::Definite ? "positive definite (sampled)" : "positive semidefinite (sampled)";
    j["variables"] = vars;
    j["checked"] = r.checked;
    j["skipped"] = r.skipped;
    j["note"] = r.note;
    if (r.witness) j["witness"] = point_json(*r.witness);
    if (r.value_at_witness) j["value_at_witness"] = *r.value_at_witness;
    return j;
}

std::string fmt(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_point(const std::vector<double>& p) {
    std::string s = "[";
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ", " : "") + fmt(p[i]);
    return s + "]";
}

class Run {
public:
    Run(Command cmd, const ScenarioConfig& cfg, const RunOptions& opts) : cmd_(cmd), cfg_(cfg), opts_(opts) {}

    CommandResult execute() {
        res_.report["tool"] = {{"name", "nisynth"}, {"version", kVersion}};
        res_.report["command"] = to_string(cmd_);
        res_.report["config"] = cfg_.source;
        if (opts_.seed) {
            seed_ = *opts_.seed;
        } else if (cfg_.seed) {
            seed_ = *cfg_.seed;
        } else {
            fail(kExitConfig, "config error: no seed given ([analysis] seed or --seed)");
            return finish();
        }
        res_.report["seed"] = seed_;
        sampling_ = cfg_.sampling;
        sampling_.seed = seed_;
        screen_ = cfg_.screen;
        screen_.seed = seed_;

        if (!analyze()) return finish();
        if (cmd_ == Command::Analyze) return finish();
        if (!synthesize()) return finish();
        if (cmd_ == Command::Synthesize) return finish();
        if (cmd_ == Command::Verify && !cfg_.has_simulate) return finish();
        simulate();
        return finish();
    }

private:
    void fail(int code, const std::string& message) {
        res_.exit_code = std::max(res_.exit_code, code);
        res_.lines.push_back(message);
        errors_.push_back(message);
    }

    void certificate(const std::string& name, bool pass, bool binding) {
        certificates_.push_back({{"name", name}, {"status", pass ? "pass" : "fail"}, {"binding", binding}});
        if (!pass && binding) fail(kExitCertificate, "certificate failed: " + name);
    }

    bool analyze() {
        json s;
        try {
            sys_ = cfg_.build_plant();
        } catch (const std::exception& e) {
            fail(kExitConfig, std::string("config error: ") + e.what());
            return false;
        }
        s["states"] = sys_.states;
        s["outputs"] = sys_.output_names;
        s["equilibrium"] = point_json(sys_.equilibrium);
        if (sys_.transform) s["output_transform"] = matrix_json(sys_.transform->T);
        try {
            if (sampling_.box.dim() != 0 && sampling_.box.dim() != sys_.n())
                throw std::invalid_argument("analysis box dimension does not match the state dimension");
            analysis_ = analyze_structure(sys_, sampling_);
        } catch (const StructureError& e) {
            s["relative_degree"] = {{"status", "fail"}, {"error", e.what()}};
            res_.report["structure"] = s;
            fail(kExitCertificate, std::string("structural failure: ") + e.what());
            return false;
        } catch (const std::invalid_argument& e) {
            res_.report["structure"] = s;
            fail(kExitConfig, std::string("config error: ") + e.what());
            return false;
        }
        const auto& prof = analysis_.profile;
        const auto r = prof.r_original();
        json rd;
        rd["status"] = "pass";
        rd["r"] = r;
        std::vector<std::string> sorted;
        for (auto k : prof.order) sorted.push_back(sys_.output_names[k]);
        rd["sorted_outputs"] = sorted;
        Eigen::MatrixXd A(prof.A.rows(), prof.A.cols());
        const Assignment origin = [&] {
            Assignment a;
            for (const auto& st : sys_.states) a[st] = 0.0;
            return a;
        }();
        for (std::size_t i = 0; i < prof.A.rows(); ++i)
            for (std::size_t j = 0; j < prof.A.cols(); ++j) A(i, j) = eval(prof.A(i, j), origin);
        rd["A_at_equilibrium"] = matrix_json(A);
        std::vector<std::string> a_text;
        for (std::size_t i = 0; i < prof.A.rows(); ++i)
            for (std::size_t j = 0; j < prof.A.cols(); ++j) a_text.push_back(to_string(prof.A(i, j)));
        rd["A_symbolic"] = a_text;
        s["relative_degree"] = rd;
        const auto& rep = analysis_.report;
        s["involutive"] = verdict_json(rep.involutive);
        s["H1"] = verdict_json(rep.h1);
        s["H2"] = verdict_json(rep.h2);
        s["H3"] = verdict_json(rep.h3);
        s["sampling"] = {{"box_lo", point_json(rep.box.lo)}, {"box_hi", point_json(rep.box.hi)},
                         {"samples", rep.samples}, {"seed", rep.seed}};
        res_.report["structure"] = s;

        std::string rline = "relative degree:";
        for (std::size_t i = 0; i < r.size(); ++i) rline += " " + sys_.output_names[i] + "=" + std::to_string(r[i]);
        res_.lines.push_back(rline);
        std::string aline = "A(x_eq) = [";
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            aline += i ? "; " : "";
            for (Eigen::Index j = 0; j < A.cols(); ++j) aline += (j ? ", " : "") + fmt(A(i, j));
        }
        res_.lines.push_back(aline + "]");
        bool ok = true;
        auto report = [&](const char* name, const Verdict& v) {
            std::string line = std::string(name) + ": " + to_string(v.status);
            if (v.witness) line += " (witness " + fmt_point(v.witness->point) + ")";
            res_.lines.push_back(line);
            if (v.status == Status::Fail) {
                ok = false;
                fail(kExitCertificate, std::string("structural failure: ") + name);
            }
        };
        report("involutive", rep.involutive);
        report("H1", rep.h1);
        report("H2", rep.h2);
        report("H3", rep.h3);
        return ok;
    }

    bool synthesize() {
        mode_ = opts_.mode.value_or(cfg_.mode);
        if (mode_.empty()) mode_ = cfg_.uncertainty ? "robust" : "stabilize";
        if (mode_ != "render" && mode_ != "stabilize" && mode_ != "robust" && mode_ != "open") {
            fail(kExitConfig, "config error: unknown mode '" + mode_ + "'");
            return false;
        }
        json s;
        s["mode"] = mode_;
        if (mode_ == "robust" && cfg_.check_W && !cfg_.uncertainty) {
            fail(kExitConfig, "config error: robust mode with check_W needs an [uncertainty] section");
            return false;
        }
        try {
            unc_ = cfg_.build_uncertainty();
        } catch (const std::exception& e) {
            fail(kExitConfig, std::string("config error: ") + e.what());
            return false;
        }
        if (mode_ == "open") {
            res_.report["law"] = s;
            res_.lines.push_back("mode open: no feedback law");
            return true;
        }

        const auto& prof = analysis_.profile;
        json screens;
        const Definiteness def = mode_ == "render" ? Definiteness::Semidefinite : Definiteness::Definite;
        bool ok = true;
        try {
            const Expr v1 = resolved_V1(prof, cfg_.storage);
            const Expr v2 = resolved_V2(prof, cfg_.storage);
            auto screen = [&](const char* name, const Expr& v, const std::vector<std::string>& vars) {
                if (vars.empty()) return;
                const auto r = screen_positive_definite(v, vars, Box::symmetric(vars.size(), screen_.half_width),
                                                        screen_.samples, def, screen_.seed, screen_.parallel);
                screens[name] = screen_json(r, vars, def);
                std::string line = std::string(name) + " screen: " + (r.pass ? "pass" : "fail") + ", " + r.note;
                if (r.witness) line += " witness " + fmt_point(*r.witness);
                res_.lines.push_back(line);
            };
            screen("V1", v1, prof.xi1_names);
            screen("V2", v2, prof.xi2_names);
            if (mode_ == "render") law_ = render_ni(sys_, prof, cfg_.storage, screen_);
            if (mode_ == "stabilize") law_ = stabilizing_law(sys_, prof, cfg_.storage, screen_);
            if (mode_ == "robust") law_ = robust_law(sys_, prof, cfg_.storage, screen_);
        } catch (const SynthesisError& e) {
            json err = {{"status", "fail"}, {"error", e.what()}};
            if (e.witness()) err["witness"] = point_json(*e.witness());
            s["synthesis"] = err;
            std::string line = std::string("synthesis failed: ") + e.what();
            if (e.witness()) line += " witness " + fmt_point(*e.witness());
            res_.report["law"] = s;
            res_.report["screens"] = screens;
            fail(kExitCertificate, line);
            return false;
        }
        s["lambda"] = law_->lambda;
        s["epsilon"] = law_->epsilon;
        s["aux_inputs"] = law_->aux;
        s["symbolic_inverse"] = !law_->pointwise;
        s["V1"] = to_string(law_->V1);
        s["V2"] = to_string(law_->V2);
        s["printed"] = law_->printed();
        V_ = storage_V(prof, cfg_.storage);
        s["V"] = to_string(*V_);
        for (const auto& line : law_->printed()) res_.lines.push_back(line);

        if (unc_ && (mode_ == "robust" || cfg_.check_W)) {
            W_ = storage_W(prof, cfg_.storage, *unc_);
            s["W"] = to_string(*W_);
            const auto nf = storage_W_normal_form(prof, cfg_.storage, *unc_);
            const auto& vars = nf.vars;
            s["W_normal_form"] = to_string(nf.W);
            const auto r = screen_positive_definite(nf.W, vars, Box::symmetric(vars.size(), screen_.half_width),
                                                    screen_.samples, Definiteness::Definite, screen_.seed,
                                                    screen_.parallel);
            screens["W"] = screen_json(r, vars, Definiteness::Definite);
            std::string line = std::string("W screen: ") + (r.pass ? "pass" : "fail") + ", " + r.note;
            if (r.witness) line += " witness " + fmt_point(*r.witness);
            res_.lines.push_back(line);
            if (!r.pass) {
                ok = false;
                fail(kExitCertificate, "W is not positive definite on the sampled box");
            }
        }
        res_.report["law"] = s;
        res_.report["screens"] = screens;
        return ok;
    }

    void simulate() {
        if (!cfg_.has_simulate) {
            fail(kExitConfig, "config error: no [simulate] section");
            return;
        }
        if (!cfg_.input.empty() && mode_ != "render" && mode_ != "open") {
            fail(kExitConfig, "config error: [simulate] v applies only to render and open modes");
            return;
        }
        const bool certify = cmd_ == Command::Verify;
        ClosedLoop cl{sys_, law_, unc_, cfg_.input, V_, W_};
        Trajectory traj;
        try {
            traj = integrate(cl, cfg_.x0, cfg_.xc0, cfg_.integrator);
        } catch (const std::exception& e) {
            fail(kExitConfig, std::string("config error: ") + e.what());
            return;
        }

        json sim;
        sim["dt"] = cfg_.integrator.dt;
        sim["T_final"] = cfg_.integrator.T_final;
        sim["steps"] = traj.size();
        sim["diverged"] = traj.diverged;
        if (traj.truncated_at) sim["truncated_at"] = *traj.truncated_at;
        if (traj.domain_error) sim["domain_error"] = *traj.domain_error;
        if (cfg_.integrator.step_doubling) sim["max_step_error"] = traj.max_step_error;
        sim["warnings"] = traj.warnings;
        for (const auto& w : traj.warnings) res_.lines.push_back("warning: " + w);

        json mon;
        const bool stopped = traj.diverged || traj.domain_error;
        if (law_ && V_) {
            const auto osni = monitor_osni(traj, sys_, *V_, *law_);
            traj.res_osni_eq = osni.equality;
            traj.res_osni_ineq = osni.inequality;
            mon["osni"] = {{"epsilon", osni.epsilon},
                           {"max_equality_residual", osni.max_equality_abs},
                           {"max_inequality_violation", osni.max_inequality_violation},
                           {"tolerance", cfg_.osni_tol}};
            res_.lines.push_back("OSNI equality residual max " + fmt(osni.max_equality_abs) +
                                 ", inequality violation max " + fmt(osni.max_inequality_violation));
            certificate("osni_equality", osni.max_equality_abs <= cfg_.osni_tol, certify);
            certificate("osni_inequality", osni.max_inequality_violation <= cfg_.osni_tol, certify);
        }
        if (W_ && unc_) {
            const auto ly = monitor_lyapunov(traj, sys_.states, unc_->states, *W_, cfg_.wdot_tol, cfg_.converge_tol);
            traj.Wdot = ly.Wdot;
            json l = {{"max_Wdot", ly.max_Wdot}, {"tolerance", cfg_.wdot_tol}};
            if (ly.stall) {
                l["stall"] = {ly.stall->first, ly.stall->second};
                res_.lines.push_back("warning: W stalls away from the origin for t in [" + fmt(ly.stall->first) + ", " +
                                     fmt(ly.stall->second) + "]; consider strengthening V1/V2");
            }
            mon["lyapunov"] = l;
            res_.lines.push_back("max Wdot " + fmt(ly.max_Wdot));
            certificate("Wdot_nonpositive", ly.max_Wdot <= cfg_.wdot_tol, certify);
        }
        const auto conv = convergence_check(traj, cfg_.converge_tol, cfg_.window);
        json c = {{"tolerance", cfg_.converge_tol},
                  {"window", cfg_.window},
                  {"states", "plant"},
                  {"max_norm_in_window", conv.max_norm_in_window},
                  {"status", conv.pass ? "pass" : "fail"}};
        if (conv.settling_time) c["settling_time"] = *conv.settling_time;
        if (unc_) c["max_uncertainty_norm_in_window"] = conv.max_uncertainty_norm_in_window;
        mon["convergence"] = c;
        res_.lines.push_back(std::string("convergence: ") + (conv.pass ? "pass" : "fail") + " (max |state| " +
                             fmt(conv.max_norm_in_window) + " over the final window" +
                             (unc_ ? ", uncertainty states " + fmt(conv.max_uncertainty_norm_in_window) : "") + ")");
        if (law_ && law_->kind != LawKind::RenderNI) certificate("convergence", conv.pass, certify);

        if (cfg_.internal) {
            IssProbeConfig pc;
            pc.seed = seed_;
            pc.z0 = cfg_.internal->z0;
            try {
                const auto iss = iss_probe(cfg_.internal->dynamics, pc, cfg_.internal->signals);
                json i = {{"verdict", iss.consistent ? "consistent with ISS" : "ISS falsified"},
                          {"runs", iss.runs.size()},
                          {"heuristic", true}};
                double worst = 0.0;
                for (const auto& run : iss.runs) worst = std::max(worst, run.terminal_norm);
                i["max_terminal_norm"] = worst;
                if (iss.witness) {
                    const auto& w = iss.runs[*iss.witness];
                    i["witness"] = {{"signal", w.signal}, {"z0", point_json(w.z0)}, {"diverged", w.diverged},
                                    {"terminal_norm", w.terminal_norm}};
                }
                mon["iss_probe"] = i;
                res_.lines.push_back(std::string("ISS probe: ") + (iss.consistent ? "consistent with ISS" : "ISS falsified"));
                certificate("iss_probe", iss.consistent, certify);
            } catch (const std::exception& e) {
                fail(kExitConfig, std::string("config error in [internal]: ") + e.what());
            }
        }
        res_.report["simulation"] = sim;
        res_.report["monitors"] = mon;

        if (stopped) {
            const std::string why = traj.diverged ? "trajectory diverged" : "evaluation failed (" + *traj.domain_error + ")";
            fail(kExitDivergence, why + "; CSV truncated at step " + std::to_string(traj.truncated_at.value_or(0)));
        }
        if (opts_.write_files) {
            const auto dir = out_dir();
            const std::string image = std::filesystem::path(cfg_.csv).stem().string() + ".png";
            write(dir / cfg_.csv, trajectory_csv(traj));
            write(dir / cfg_.plot, gnuplot_script(cfg_.csv, image, traj.n, traj.has_uncertainty ? traj.nc : 0));
        }
    }

    std::filesystem::path out_dir() const {
        if (opts_.out_dir) return *opts_.out_dir;
        return cfg_.base_dir / cfg_.out_dir;
    }

    void write(const std::filesystem::path& path, const std::string& contents) {
        write_atomic(path, contents);
        res_.files.push_back(path);
        manifest_.push_back(path.filename().string());
    }

    CommandResult finish() {
        if (!certificates_.empty()) res_.report["certificates"] = certificates_;
        res_.report["errors"] = errors_;
        res_.report["exit_code"] = res_.exit_code;
        res_.report["status"] = res_.exit_code == kExitPass ? "pass" : "fail";
        const std::string name = cmd_ == Command::Verify ? cfg_.report : std::string(to_string(cmd_)) + ".json";
        if (opts_.write_files && res_.exit_code != kExitConfig) {
            manifest_.push_back(name);
            res_.report["manifest"] = {{"files", manifest_}, {"timestamp", nullptr}};
            try {
                write_atomic(out_dir() / name, res_.report.dump(2) + "\n");
                res_.files.push_back(out_dir() / name);
            } catch (const std::exception& e) {
                fail(kExitConfig, std::string("output error: ") + e.what());
            }
        } else {
            res_.report["manifest"] = {{"files", manifest_}, {"timestamp", nullptr}};
        }
        return std::move(res_);
    }

    Command cmd_;
    const ScenarioConfig& cfg_;
    RunOptions opts_;
    CommandResult res_;
    std::uint64_t seed_ = 0;
    SamplingConfig sampling_;
    ScreenConfig screen_;
    AffineSystem sys_;
    StructureAnalysis analysis_;
    std::string mode_;
    std::optional<UncertaintyModel> unc_;
    std::optional<FeedbackLaw> law_;
    std::optional<Expr> V_;
    std::optional<Expr> W_;
    json certificates_ = json::array();
    std::vector<std::string> errors_;
    std::vector<std::string> manifest_;
};

}  // namespace

CommandResult run_command(Command cmd, const ScenarioConfig& cfg, const RunOptions& opts) {
    return Run(cmd, cfg, opts).execute();
}

CommandResult run_command(Command cmd, const std::filesystem::path& config, const RunOptions& opts) {
    ScenarioConfig cfg;
    try {
        cfg = load_config(config);
    } catch (const ConfigError& e) {
        CommandResult res;
        res.exit_code = kExitConfig;
        res.lines.push_back(std::string("config error: ") + e.what());
        res.report["command"] = to_string(cmd);
        res.report["errors"] = {std::string(e.what())};
        res.report["exit_code"] = kExitConfig;
        res.report["status"] = "fail";
        return res;
    }
    return run_command(cmd, cfg, opts);
}

CommandResult cmd_analyze(const std::filesystem::path& config, const RunOptions& opts) {
    return run_command(Command::Analyze, config, opts);
}
CommandResult cmd_synthesize(const std::filesystem::path& config, const RunOptions& opts) {
    return run_command(Command::Synthesize, config, opts);
}
CommandResult cmd_simulate(const std::filesystem::path& config, const RunOptions& opts) {
    return run_command(Command::Simulate, config, opts);
}
CommandResult cmd_verify(const std::filesystem::path& config, const RunOptions& opts) {
    return run_command(Command::Verify, config, opts);
}

}  // namespace nisynth
