#include "firmfx/pipeline.hpp"
#include "firmfx/csv.hpp"
#include "firmfx/did.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/markup.hpp"
#include "firmfx/panel.hpp"
#include "firmfx/prodfn.hpp"
#include "firmfx/psm.hpp"
#include "firmfx/simgen.hpp"
#include "firmfx/stats.hpp"
#include "firmfx/version.hpp"
#include "firmfx/vertical.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace firmfx::pipeline {

// ---------------------------------------------------------------- RunConfig

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty())
            cfg.kv[key] = val;
    }
    return cfg;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() || it->second.empty() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
    auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) return fallback;
    return parse_int(it->second, "config key " + key);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) return fallback;
    return parse_double(it->second, "config key " + key);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = kv.find(key);
    if (it == kv.end())
        return out;
    std::string cur;
    for (char c : it->second) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ' && c != '\t') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv)
        if (k != "threads")
            os << k << "=" << v << "\n";
    return os.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {
        "simulate", "estimate-prodfn", "markups", "classify",
        "did",      "event-study",     "psm-did", "report"};
    return order;
}

// ------------------------------------------------------------------ context

namespace {

struct OutcomeResult {
    std::string name;
    double estimate = 0.0, se = 0.0, ci_lo = 0.0, ci_hi = 0.0, p_value = 1.0;
    long long n_obs = 0;
    long long n_treated_firms = 0;
};

struct Ctx {
    RunConfig cfg;
    std::string outdir;
    std::string manifest;
    std::uint64_t seed = 1;

    bool panel_loaded = false;
    Panel panel;
    QualityReport report;

    bool bundle_done = false;
    prodfn::Bundle bundle;

    bool markups_done = false;
    std::vector<markup::MarkupRecord> markups;

    bool classify_done = false;
    vertical::ClassifyResult classes;
    long long deals_skipped = 0;

    std::vector<OutcomeResult> overall;
    bool did_done = false;

    std::optional<did::EventStudy> event;
};

std::string hex16(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string make_manifest(const RunConfig& cfg, std::uint64_t seed) {
    return std::string("firmfx v") + kVersion + " config=" + hex16(cfg.hash()) +
           " seed=" + std::to_string(seed);
}

std::string out_path(const Ctx& ctx, const std::string& name) {
    return (fs::path(ctx.outdir) / name).string();
}

// configured path, else the artifact in the output directory
std::string input_path(const Ctx& ctx, const std::string& key, const std::string& fallback) {
    const std::string p = ctx.cfg.get(key);
    if (!p.empty())
        return p;
    return out_path(ctx, fallback);
}

std::vector<std::string> outcome_list(const Ctx& ctx) {
    std::vector<std::string> v = ctx.cfg.get_list("outcomes");
    if (v.empty())
        v = did::dashboard_outcomes();
    return v;
}

// ------------------------------------------------------------- simulate

sim::SimConfig sim_config_from(const RunConfig& cfg, std::uint64_t seed) {
    sim::SimConfig c;
    c.seed = seed;
    c.n_firms_per_industry = static_cast<int>(cfg.get_int("sim_firms", 200));
    const auto inds = cfg.get_list("sim_industries");
    if (!inds.empty()) {
        c.industry_codes.clear();
        for (const auto& s : inds)
            c.industry_codes.push_back(static_cast<int>(parse_int(s, "sim_industries")));
    }
    const auto years = cfg.get_list("sim_years");
    if (years.size() == 2) {
        c.year_start = static_cast<int>(parse_int(years[0], "sim_years"));
        c.year_end = static_cast<int>(parse_int(years[1], "sim_years"));
    }
    c.n_countries = static_cast<int>(cfg.get_int("sim_countries", 1));
    c.rho = cfg.get_double("sim_rho", c.rho);
    c.sigma_xi = cfg.get_double("sim_sigma_xi", c.sigma_xi);
    if (cfg.get("sim_xi_dist", "gaussian") == "skewed")
        c.xi_dist = sim::SimConfig::XiDist::SkewedExponential;
    c.sigma_eps = cfg.get_double("sim_sigma_eps", c.sigma_eps);
    c.omega_regime_shift = cfg.get_double("sim_omega_regime", 0.0);
    c.mu_level = cfg.get_double("sim_mu", c.mu_level);
    const std::string mu_rule = cfg.get("sim_mu_rule", "constant");
    if (mu_rule == "lognormal")
        c.mu_rule = sim::SimConfig::MuRule::FirmLognormal;
    else if (mu_rule == "capital-linked")
        c.mu_rule = sim::SimConfig::MuRule::CapitalLinked;
    else if (mu_rule == "productivity-linked")
        c.mu_rule = sim::SimConfig::MuRule::ProductivityLinked;
    else if (mu_rule != "constant")
        throw ConfigError("sim_mu_rule: expected constant | lognormal | capital-linked | "
                          "productivity-linked");
    c.mu_firm_sigma = cfg.get_double("sim_mu_firm_sigma", c.mu_firm_sigma);
    c.mu_year_sigma = cfg.get_double("sim_mu_year_sigma", c.mu_year_sigma);
    c.mu_cap_lin = cfg.get_double("sim_mu_cap_lin", c.mu_cap_lin);
    c.mu_cap_quad = cfg.get_double("sim_mu_cap_quad", c.mu_cap_quad);
    c.mu_omega_lin = cfg.get_double("sim_mu_omega_lin", c.mu_omega_lin);
    c.mu_omega_quad = cfg.get_double("sim_mu_omega_quad", c.mu_omega_quad);
    if (cfg.get("sim_materials", "foc") == "exogenous")
        c.materials_rule = sim::SimConfig::MaterialsRule::Exogenous;
    c.materials_noise_sigma = cfg.get_double("sim_materials_noise", 0.0);
    c.materials_adjustment = cfg.get_double("sim_materials_adjustment", 0.0);
    c.exo_mean_m = cfg.get_double("sim_exo_mean_m", c.exo_mean_m);
    c.exo_rho_m = cfg.get_double("sim_exo_rho_m", c.exo_rho_m);
    c.exo_sigma_m = cfg.get_double("sim_exo_sigma_m", c.exo_sigma_m);
    c.exo_omega_coef = cfg.get_double("sim_exo_omega_coef", c.exo_omega_coef);
    c.exo_l_coef = cfg.get_double("sim_exo_l_coef", c.exo_l_coef);
    c.exo_k_coef = cfg.get_double("sim_exo_k_coef", c.exo_k_coef);
    c.rho_l = cfg.get_double("sim_rho_l", c.rho_l);
    c.sigma_l = cfg.get_double("sim_sigma_l", c.sigma_l);
    c.react_l = cfg.get_double("sim_react_l", c.react_l);
    c.rho_k = cfg.get_double("sim_rho_k", c.rho_k);
    c.sigma_k = cfg.get_double("sim_sigma_k", c.sigma_k);
    c.react_k = cfg.get_double("sim_react_k", c.react_k);
    c.mean_l = cfg.get_double("sim_mean_l", c.mean_l);
    c.mean_k = cfg.get_double("sim_mean_k", c.mean_k);
    c.sd_l0 = cfg.get_double("sim_sd_l0", c.sd_l0);
    c.sd_k0 = cfg.get_double("sim_sd_k0", c.sd_k0);
    c.deflator_growth = cfg.get_double("sim_deflator_growth", 0.0);

    const auto beta = cfg.get_list("sim_beta"); // l,k,m first-order terms
    sim::Technology tech;
    if (beta.size() == 3) {
        tech.bl = parse_double(beta[0], "sim_beta");
        tech.bk = parse_double(beta[1], "sim_beta");
        tech.bm = parse_double(beta[2], "sim_beta");
    }
    const auto beta2 = cfg.get_list("sim_beta2"); // ll,kk,mm,lk,lm,km
    if (beta2.size() == 6) {
        tech.bll = parse_double(beta2[0], "sim_beta2");
        tech.bkk = parse_double(beta2[1], "sim_beta2");
        tech.bmm = parse_double(beta2[2], "sim_beta2");
        tech.blk = parse_double(beta2[3], "sim_beta2");
        tech.blm = parse_double(beta2[4], "sim_beta2");
        tech.bkm = parse_double(beta2[5], "sim_beta2");
    }
    c.technologies.assign(c.industry_codes.size(), tech);

    const auto cohorts = cfg.get_list("sim_cohorts");
    const auto shares = cfg.get_list("sim_shares");
    for (const auto& s : cohorts)
        c.cohort_years.push_back(static_cast<int>(parse_int(s, "sim_cohorts")));
    for (const auto& s : shares)
        c.cohort_shares.push_back(parse_double(s, "sim_shares"));
    c.sel_size = cfg.get_double("sim_sel_size", 0.0);
    c.sel_capint = cfg.get_double("sim_sel_capint", 0.0);
    c.sel_tfp = cfg.get_double("sim_sel_tfp", 0.0);

    const auto eff = cfg.get_list("sim_effect"); // e.g. "constant,0.05"
    if (!eff.empty()) {
        if (eff[0] == "none") {
            c.effect.kind = sim::EffectPath::Kind::None;
        } else if (eff[0] == "constant" && eff.size() == 2) {
            c.effect.kind = sim::EffectPath::Kind::Constant;
            c.effect.delta = parse_double(eff[1], "sim_effect");
        } else if (eff[0] == "linear" && eff.size() == 2) {
            c.effect.kind = sim::EffectPath::Kind::LinearInExposure;
            c.effect.delta = parse_double(eff[1], "sim_effect");
        } else {
            throw ConfigError("sim_effect: expected none | constant,<d> | linear,<d>");
        }
    }
    return c;
}

void write_sim_output(const Ctx& ctx, const sim::SimOutput& out) {
    {
        CsvWriter w(out_path(ctx, "firms.csv"), ctx.manifest,
                    {"firm_id", "year", "country", "nace2", "sales", "materials",
                     "labor_cost", "employees", "fixed_assets", "value_added",
                     "incorporation_year", "liquidity", "solvency", "roi"});
        for (const auto& fy : out.panel.rows) {
            w.field(out.panel.firm_ids[fy.firm]);
            w.field(fy.year);
            w.field(out.panel.country_codes[fy.country]);
            w.field(fy.industry);
            w.field(fy.sales);
            w.field(fy.materials);
            w.field(fy.labor_cost);
            w.field(fy.employees);
            w.field(fy.fixed_assets);
            w.field(fy.value_added);
            w.field(fy.incorporation_year);
            w.field(fy.liquidity);
            w.field(fy.solvency);
            w.field(fy.roi);
            w.end_row();
        }
    }
    {
        CsvWriter w(out_path(ctx, "treatments.csv"), ctx.manifest,
                    {"firm_id", "cohort_year", "acquirer_id", "acquirer_nace2",
                     "acquirer_country", "acquirer_perimeter"});
        for (int f = 0; f < out.panel.n_firms(); ++f) {
            if (out.panel.cohort[f] == kNeverTreated)
                continue;
            const DealInfo& d = out.panel.deals[f];
            w.field(out.panel.firm_ids[f]);
            w.field(out.panel.cohort[f]);
            w.field(d.acquirer_id);
            if (d.acquirer_nace2 >= 0) w.field(static_cast<long long>(d.acquirer_nace2));
            else w.field(std::string());
            w.field(d.acquirer_country);
            if (d.acquirer_perimeter >= 0) w.field(d.acquirer_perimeter);
            else w.field(std::string());
            w.end_row();
        }
    }
    {
        CsvWriter w(out_path(ctx, "deflators.csv"), ctx.manifest,
                    {"country", "nace2", "year", "deflator"});
        for (const auto& [key, v] : out.deflators.cells) {
            w.field(std::get<0>(key));
            w.field(std::get<1>(key));
            w.field(std::get<2>(key));
            w.field(v);
            w.end_row();
        }
    }
    {
        CsvWriter w(out_path(ctx, "truth.csv"), ctx.manifest,
                    {"firm_id", "year", "omega", "epsilon", "mu", "theta_m", "theta_l",
                     "delta"});
        for (std::size_t r = 0; r < out.panel.rows.size(); ++r) {
            const auto& fy = out.panel.rows[r];
            w.field(out.panel.firm_ids[fy.firm]);
            w.field(fy.year);
            w.field(out.truth.omega[r]);
            w.field(out.truth.epsilon[r]);
            w.field(out.truth.mu[r]);
            w.field(out.truth.theta_m[r]);
            w.field(out.truth.theta_l[r]);
            w.field(out.truth.delta_applied[r]);
            w.end_row();
        }
    }
    {
        CsvWriter w(out_path(ctx, "truth_beta.csv"), ctx.manifest,
                    {"industry", "term", "value"});
        for (std::size_t i = 0; i < out.truth.industry_codes.size(); ++i) {
            const auto& t = out.truth.technologies[i];
            const std::pair<const char*, double> terms[] = {
                {"l", t.bl},  {"k", t.bk},  {"m", t.bm},  {"l2", t.bll}, {"k2", t.bkk},
                {"m2", t.bmm}, {"lk", t.blk}, {"lm", t.blm}, {"km", t.bkm}};
            for (const auto& [name, v] : terms) {
                w.field(static_cast<long long>(out.truth.industry_codes[i]));
                w.field(std::string(name));
                w.field(v);
                w.end_row();
            }
        }
    }
}

void stage_simulate(Ctx& ctx) {
    sim::SimOutput out = sim::generate(sim_config_from(ctx.cfg, ctx.seed));
    write_sim_output(ctx, out);
}

// ------------------------------------------------------------- panel load

std::set<std::string> resolve_countries(const Ctx& ctx) {
    std::set<std::string> out;
    const auto list = ctx.cfg.get_list("countries");
    if (list.empty())
        return out;
    for (const auto& item : list) {
        if (!item.empty() && item[0] == '@') {
            const std::string path =
                ctx.cfg.get("country_groups_file", "data/country_groups.csv");
            CsvTable t = read_csv(path);
            const int cg = t.col("group");
            const int cc = t.col("country");
            const std::string want = item.substr(1);
            bool found = false;
            for (std::size_t r = 0; r < t.rows.size(); ++r)
                if (t.cell(r, cg) == want) {
                    out.insert(t.cell(r, cc));
                    found = true;
                }
            if (!found)
                throw ConfigError("unknown country group " + item + " in " + path);
        } else {
            out.insert(item);
        }
    }
    return out;
}

std::set<int> resolve_tech_industries(const Ctx& ctx) {
    std::set<int> out;
    const std::string cls = ctx.cfg.get("tech_class", "all");
    if (cls == "all" || cls.empty())
        return out;
    const std::string path = ctx.cfg.get("tech_file", "data/tech_intensity.csv");
    CsvTable t = read_csv(path);
    const int cn = t.col("nace2");
    const int cc = t.col("class");
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        if (t.cell(r, cc) == cls)
            out.insert(static_cast<int>(parse_int(t.cell(r, cn), path)));
    if (out.empty())
        throw ConfigError("technology class '" + cls + "' matches no industry in " + path);
    return out;
}

void ensure_classified(Ctx& ctx);

void ensure_panel(Ctx& ctx) {
    if (ctx.panel_loaded)
        return;
    LoadOptions lo;
    lo.trim_log_tails = ctx.cfg.get_bool("trim_log_tails", false);
    SchemaMap schema;
    Panel p = load_panel(input_path(ctx, "firms", "firms.csv"), schema, ctx.report, lo);
    DeflatorTable defl = load_deflators(input_path(ctx, "deflators", "deflators.csv"));
    apply_deflators(p, defl);
    derive_variables(p, ctx.report);
    const std::string tpath = input_path(ctx, "treatments", "treatments.csv");
    if (fs::exists(tpath))
        load_treatments(p, tpath, ctx.report);

    // subsample filters: country list, technology class, deal-level filters
    const std::set<std::string> countries = resolve_countries(ctx);
    const std::set<int> tech = resolve_tech_industries(ctx);
    std::vector<char> keep_row(p.rows.size(), 1);
    if (!countries.empty() || !tech.empty()) {
        for (std::size_t r = 0; r < p.rows.size(); ++r) {
            const FirmYear& fy = p.rows[r];
            if (!countries.empty() && !countries.count(p.country_codes[fy.country]))
                keep_row[r] = 0;
            if (!tech.empty() && !tech.count(fy.industry))
                keep_row[r] = 0;
        }
    }

    // deal filters drop the treated firms that fail them (their rows leave the
    // estimation sample entirely; never-treated controls stay)
    const std::string deal_class = ctx.cfg.get("deal_class", "all");
    const bool foreign_only = ctx.cfg.get_bool("foreign_only", false);
    const std::string perim = ctx.cfg.get("perimeter_bin", "all");
    if (deal_class != "all" || foreign_only || perim != "all") {
        ctx.panel = std::move(p); // classification needs the panel
        ctx.panel_loaded = true;
        ensure_classified(ctx);
        Panel& q = ctx.panel;
        std::map<int, const vertical::Deal*> by_firm;
        for (const auto& d : ctx.classes.deals)
            if (d.target_firm >= 0)
                by_firm[d.target_firm] = &d;
        std::vector<char> keep_firm(q.n_firms(), 1);
        for (int f = 0; f < q.n_firms(); ++f) {
            if (q.cohort[f] == kNeverTreated)
                continue;
            auto it = by_firm.find(f);
            if (it == by_firm.end()) {
                keep_firm[f] = 0; // unclassifiable deal
                continue;
            }
            const vertical::Deal& d = *it->second;
            if (deal_class != "all" && vertical::to_string(d.classification) != deal_class)
                keep_firm[f] = 0;
            if (foreign_only && !d.foreign)
                keep_firm[f] = 0;
            if (perim != "all" &&
                vertical::perimeter_bin(d.acquirer_perimeter) !=
                    vertical::parse_perimeter_bin(perim))
                keep_firm[f] = 0;
        }
        for (std::size_t r = 0; r < q.rows.size(); ++r)
            if (!keep_firm[q.rows[r].firm])
                keep_row[r] = 0;
        ctx.panel = subset(q, keep_row);
        return;
    }

    bool all = true;
    for (char c : keep_row)
        if (!c) { all = false; break; }
    ctx.panel = all ? std::move(p) : subset(p, keep_row);
    ctx.panel_loaded = true;
}

// ------------------------------------------------------------- prodfn

prodfn::TranslogSpec spec_from(const RunConfig& cfg) {
    prodfn::TranslogSpec spec;
    spec.cobb_douglas = cfg.get("prodfn_form", "translog") == "cobb-douglas";
    spec.include_time_dummies = cfg.get_bool("time_dummies", true);
    return spec;
}

void ensure_bundle(Ctx& ctx) {
    if (ctx.bundle_done)
        return;
    ensure_panel(ctx);
    prodfn::AcfConfig acf;
    acf.seed = ctx.seed;
    acf.tolerance = ctx.cfg.get_double("acf_tolerance", acf.tolerance);
    acf.first_stage_lagged_m = ctx.cfg.get_bool("acf_lagged_m", false);
    const bool use_acf = ctx.cfg.get("prodfn_method", "acf") == "acf";
    ctx.bundle = prodfn::estimate_all(ctx.panel, spec_from(ctx.cfg), use_acf, acf,
                                      static_cast<int>(ctx.cfg.get_int("prodfn_min_obs", 30)));
    // productivity enters downstream as the TFP covariate; the least-squares
    // variant cannot separate omega from the residual, so it uses their sum
    for (std::size_t r = 0; r < ctx.panel.rows.size(); ++r) {
        double tfp = ctx.bundle.omega_hat[r];
        if (!use_acf && !std::isnan(tfp))
            tfp += ctx.bundle.epsilon_hat[r];
        ctx.panel.rows[r].tfp = tfp;
    }
    ctx.bundle_done = true;
}

void stage_prodfn(Ctx& ctx) {
    ensure_bundle(ctx);
    {
        CsvWriter w(out_path(ctx, "elasticities.csv"), ctx.manifest,
                    {"industry", "term", "coefficient", "std_error"});
        for (const auto& es : ctx.bundle.industries) {
            for (const auto& term : prodfn::term_names()) {
                w.field(static_cast<long long>(es.industry));
                w.field(term);
                w.field(es.beta.at(term));
                w.field(std::string()); // bootstrap SEs are opt-in via the API
                w.end_row();
            }
        }
    }
    {
        CsvWriter w(out_path(ctx, "prodfn_obs.csv"), ctx.manifest,
                    {"firm_id", "year", "theta_m", "theta_l", "phi_hat", "epsilon_hat",
                     "omega_hat"});
        for (std::size_t r = 0; r < ctx.panel.rows.size(); ++r) {
            if (std::isnan(ctx.bundle.theta_m[r]))
                continue;
            const auto& fy = ctx.panel.rows[r];
            w.field(ctx.panel.firm_ids[fy.firm]);
            w.field(fy.year);
            w.field(ctx.bundle.theta_m[r]);
            w.field(ctx.bundle.theta_l[r]);
            w.field(ctx.bundle.phi_hat[r]);
            w.field(ctx.bundle.epsilon_hat[r]);
            w.field(ctx.bundle.omega_hat[r]);
            w.end_row();
        }
    }
    write_text_file(out_path(ctx, "load_report.txt"), ctx.manifest, ctx.report.to_text());
}

// ------------------------------------------------------------- markups

void ensure_markups(Ctx& ctx) {
    if (ctx.markups_done)
        return;
    ensure_bundle(ctx);
    markup::MarkupOptions mo;
    mo.flexible_input = markup::parse_flexible_input(ctx.cfg.get("flexible_input", "materials"));
    mo.correct_shares = ctx.cfg.get_bool("correct_shares", true);
    long long excluded = 0;
    ctx.markups = markup::compute_markups(ctx.panel, ctx.bundle, mo, &excluded);
    if (excluded > 0)
        ctx.report.drops["markup: no elasticity or zero expenditure"] = excluded;
    markup::attach_markups(ctx.panel, ctx.markups);
    ctx.markups_done = true;
}

void stage_markups(Ctx& ctx) {
    ensure_markups(ctx);
    const std::string flex = ctx.cfg.get("flexible_input", "materials");
    {
        CsvWriter w(out_path(ctx, "markups.csv"), ctx.manifest,
                    {"firm_id", "year", "mu", "theta", "alpha", "flexible_input"});
        for (const auto& rec : ctx.markups) {
            w.field(ctx.panel.firm_ids[rec.firm]);
            w.field(rec.year);
            w.field(rec.mu);
            w.field(rec.theta_used);
            w.field(rec.alpha);
            w.field(flex);
            w.end_row();
        }
    }
    {
        CsvWriter w(out_path(ctx, "markup_series.csv"), ctx.manifest,
                    {"year", "industry", "weighted_mean", "n"});
        auto pooled = markup::aggregate_markups(ctx.panel, ctx.markups,
                                                markup::Weighting::Sales, false);
        auto by_ind = markup::aggregate_markups(ctx.panel, ctx.markups,
                                                markup::Weighting::Sales, true);
        for (const auto& s : pooled) {
            w.field(s.year);
            w.field(std::string());
            w.field(s.weighted_mean);
            w.field(s.n);
            w.end_row();
        }
        for (const auto& s : by_ind) {
            w.field(s.year);
            w.field(static_cast<long long>(s.industry));
            w.field(s.weighted_mean);
            w.field(s.n);
            w.end_row();
        }
    }
}

// ------------------------------------------------------------- classify

void ensure_classified(Ctx& ctx) {
    if (ctx.classify_done)
        return;
    ensure_panel(ctx);
    std::vector<vertical::Deal> deals;
    ctx.deals_skipped = 0;
    for (int f = 0; f < ctx.panel.n_firms(); ++f) {
        if (ctx.panel.cohort[f] == kNeverTreated)
            continue;
        const DealInfo& info = ctx.panel.deals[f];
        if (info.acquirer_nace2 < 0) {
            ++ctx.deals_skipped; // cannot classify without the acquirer industry
            continue;
        }
        vertical::Deal d;
        d.deal_id = "D_" + ctx.panel.firm_ids[f];
        d.target_firm = f;
        d.target_id = ctx.panel.firm_ids[f];
        d.year = ctx.panel.cohort[f];
        auto [b, e] = ctx.panel.firm_span(f);
        if (b == e)
            continue;
        int r = ctx.panel.find(f, ctx.panel.cohort[f] - 1);
        if (r < 0)
            r = b;
        d.target_nace2 = ctx.panel.rows[r].industry;
        d.target_country = ctx.panel.country_codes[ctx.panel.rows[r].country];
        d.acquirer_id = info.acquirer_id;
        d.acquirer_nace2 = info.acquirer_nace2;
        d.acquirer_country = info.acquirer_country;
        d.acquirer_perimeter = info.acquirer_perimeter;
        deals.push_back(std::move(d));
    }
    if (deals.empty())
        throw DataError("classify: no classifiable deals (missing acquirer industries?)");
    vertical::IOTable io = vertical::load_io_table(input_path(ctx, "io_table", "io_table.csv"));
    vertical::IndustryBridge bridge =
        vertical::load_bridge(ctx.cfg.get("industry_bridge", "data/industry_bridge.csv"));
    const double pct = ctx.cfg.get_double("vertical_threshold", 50.0);
    ctx.classes = vertical::classify_deals(std::move(deals), io, bridge, pct);
    ctx.classify_done = true;
}

void stage_classify(Ctx& ctx) {
    ensure_classified(ctx);
    CsvWriter w(out_path(ctx, "deals_classified.csv"), ctx.manifest,
                {"deal_id", "firm_id", "classification", "coefficient_used", "threshold",
                 "foreign", "perimeter_bin"});
    for (const auto& d : ctx.classes.deals) {
        w.field(d.deal_id);
        w.field(d.target_id);
        w.field(vertical::to_string(d.classification));
        w.field(d.coefficient_used);
        w.field(ctx.classes.threshold_value);
        w.field(std::string(d.foreign ? "true" : "false"));
        w.field(vertical::to_string(vertical::perimeter_bin(d.acquirer_perimeter)));
        w.end_row();
    }
}

// ------------------------------------------------------------- did stages

did::CohortDesign design_from(const Ctx& ctx) {
    did::CohortDesign d;
    std::set<int> cohorts;
    const int anticipation = static_cast<int>(ctx.cfg.get_int("anticipation", 0));
    int ymin = INT_MAX, ymax = INT_MIN;
    for (const auto& fy : ctx.panel.rows) {
        ymin = std::min(ymin, fy.year);
        ymax = std::max(ymax, fy.year);
    }
    for (int f = 0; f < ctx.panel.n_firms(); ++f) {
        const int g = ctx.panel.cohort[f];
        if (g != kNeverTreated && g - 1 - anticipation >= ymin && g <= ymax)
            cohorts.insert(g);
    }
    if (cohorts.empty())
        throw DataError("did: no usable treatment cohorts in the sample");
    d.cohorts.assign(cohorts.begin(), cohorts.end());
    d.anticipation = anticipation;
    d.control_rule = ctx.cfg.get("control_rule", "notyet") == "never"
                         ? did::ControlRule::NeverTreatedOnly
                         : did::ControlRule::NeverPlusNotYet;
    auto cov = ctx.cfg.get_list("covariates");
    if (!cov.empty()) {
        d.pscore_covariates = cov;
        d.outcome_covariates = cov;
    }
    d.overlap_ceiling = ctx.cfg.get_double("overlap_ceiling", d.overlap_ceiling);
    return d;
}

void prepare_outcome_inputs(Ctx& ctx, const std::vector<std::string>& outcomes) {
    bool need_markup = false, need_tfp = false;
    for (const auto& o : outcomes) {
        if (o == "markup") need_markup = true;
        if (o == "tfp") need_tfp = true;
    }
    const auto cov = ctx.cfg.get_list("covariates");
    const bool cov_tfp = cov.empty() ||
                         std::find(cov.begin(), cov.end(), "tfp") != cov.end();
    if (need_markup)
        ensure_markups(ctx);
    else if (need_tfp || cov_tfp)
        ensure_bundle(ctx);
}

void stage_did(Ctx& ctx) {
    ensure_panel(ctx);
    const std::vector<std::string> outcomes = outcome_list(ctx);
    prepare_outcome_inputs(ctx, outcomes);
    const did::CohortDesign design = design_from(ctx);
    const int reps = static_cast<int>(ctx.cfg.get_int("bootstrap_reps", 999));

    ctx.overall.clear();
    bool first = true;
    for (const auto& name : outcomes) {
        long long undefined = 0;
        std::vector<double> y = did::make_outcome(ctx.panel, name, &undefined);
        long long usable = static_cast<long long>(y.size()) - undefined;
        if (usable == 0) {
            std::cerr << "warning: outcome " << name << " omitted (no usable rows)\n";
            continue;
        }
        did::DidEngine engine(ctx.panel, y, design);
        did::AggregatedEffect overall = engine.aggregate_overall(reps, ctx.seed);
        OutcomeResult res;
        res.name = name;
        res.estimate = overall.estimates[0];
        res.se = overall.se[0];
        res.ci_lo = overall.ci_low[0];
        res.ci_hi = overall.ci_high[0];
        res.p_value = res.se > 0.0 ? z_pvalue(res.estimate / res.se) : 0.0;
        res.n_obs = usable;
        for (int f = 0; f < ctx.panel.n_firms(); ++f)
            for (int g : design.cohorts)
                if (ctx.panel.cohort[f] == g)
                    ++res.n_treated_firms;
        ctx.overall.push_back(res);

        if (first) {
            engine.attach_cell_ses(reps, ctx.seed);
            CsvWriter w(out_path(ctx, "att_gt.csv"), ctx.manifest,
                        {"g", "t", "estimate", "se", "n_treated", "n_control", "feasible"});
            for (const auto& c : engine.cells()) {
                w.field(c.g);
                w.field(c.t);
                if (c.feasible) w.field(c.estimate);
                else w.field(std::string());
                w.field(c.se);
                w.field(c.n_treated);
                w.field(c.n_control);
                w.field(std::string(c.feasible ? "true" : "false"));
                w.end_row();
            }
            first = false;
        }
    }
    if (ctx.overall.empty())
        throw DataError("did: every requested outcome was empty");

    CsvWriter w(out_path(ctx, "did_overall.csv"), ctx.manifest,
                {"outcome", "estimate", "se", "ci_low", "ci_high", "p_value", "stars",
                 "n_treated_firms", "n_obs"});
    for (const auto& r : ctx.overall) {
        w.field(r.name);
        w.field(r.estimate);
        w.field(r.se);
        w.field(r.ci_lo);
        w.field(r.ci_hi);
        w.field(r.p_value);
        w.field(stars(r.p_value));
        w.field(r.n_treated_firms);
        w.field(r.n_obs);
        w.end_row();
    }
    ctx.did_done = true;
}

void stage_event_study(Ctx& ctx) {
    ensure_panel(ctx);
    const std::vector<std::string> outcomes = outcome_list(ctx);
    prepare_outcome_inputs(ctx, outcomes);
    const did::CohortDesign design = design_from(ctx);
    const int reps = static_cast<int>(ctx.cfg.get_int("bootstrap_reps", 999));
    const std::string name = outcomes.front();
    std::vector<double> y = did::make_outcome(ctx.panel, name, nullptr);
    did::DidEngine engine(ctx.panel, y, design);

    int e_min = INT_MAX, e_max = INT_MIN;
    for (int g : design.cohorts) {
        e_min = std::min(e_min, engine.year_min() - g);
        e_max = std::max(e_max, engine.year_max() - g);
    }
    const auto win = ctx.cfg.get_list("event_window");
    if (win.size() == 2) {
        e_min = static_cast<int>(parse_int(win[0], "event_window"));
        e_max = static_cast<int>(parse_int(win[1], "event_window"));
    }
    did::EventStudy es = engine.event_study(e_min, e_max, reps, ctx.seed);
    ctx.event = es;

    {
        CsvWriter w(out_path(ctx, "event_study.csv"), ctx.manifest,
                    {"e", "estimate", "se", "ci_low", "ci_high"});
        for (std::size_t j = 0; j < es.by_exposure.index.size(); ++j) {
            w.field(es.by_exposure.index[j]);
            w.field(es.by_exposure.estimates[j]);
            w.field(es.by_exposure.se[j]);
            w.field(es.by_exposure.ci_low[j]);
            w.field(es.by_exposure.ci_high[j]);
            w.end_row();
        }
    }
    {
        std::ostringstream os;
        os << "Outcome: " << name << "\n";
        auto line = [&](const char* label, double v, double se) {
            const double z = se > 0.0 ? v / se : 0.0;
            const double p = se > 0.0 ? z_pvalue(z) : 1.0;
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "%-20s %10.4f %10.4f %8.2f %8.3f [%8.4f, %8.4f]\n", label, v, se,
                          z, p, v - 1.959963984540054 * se, v + 1.959963984540054 * se);
            os << buf;
        };
        os << "                      Coefficient  Std. err.        z    P>|z|   [95% conf. "
              "interval]\n";
        line("Pre treatment avg", es.pre_avg, es.pre_avg_se);
        line("Post treatment avg", es.post_avg, es.post_avg_se);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "Pretrend Test: H0 All Pre-treatment are equal to 0  chi2(%d) = %.3f  "
                      "p-value = %.3f\n",
                      es.pretrend_df, es.pretrend_chi2, es.pretrend_pvalue);
        os << buf;
        write_text_file(out_path(ctx, "pretrend_test.txt"), ctx.manifest, os.str());
    }
}

void stage_psm(Ctx& ctx) {
    ensure_panel(ctx);
    const std::vector<std::string> outcomes = outcome_list(ctx);
    prepare_outcome_inputs(ctx, outcomes);
    const std::string name = outcomes.front();
    std::vector<double> y = did::make_outcome(ctx.panel, name, nullptr);

    psm::MatchOptions mo;
    if (ctx.cfg.has("psm_caliper"))
        mo.caliper = ctx.cfg.get_double("psm_caliper", mo.caliper);
    mo.with_replacement = ctx.cfg.get_bool("psm_replacement", false);
    // age-based covariates are disabled when incorporation_year is absent
    bool have_age = false;
    for (const auto& fy : ctx.panel.rows)
        if (!std::isnan(fy.age)) { have_age = true; break; }
    if (!have_age) {
        mo.covariates.erase(std::remove(mo.covariates.begin(), mo.covariates.end(), "age"),
                            mo.covariates.end());
        std::cerr << "warning: firm age unavailable; matching without it\n";
    }
    psm::MatchedSample m = psm::nn_match(ctx.panel, mo);

    {
        CsvWriter w(out_path(ctx, "matched_pairs.csv"), ctx.manifest,
                    {"treated_id", "control_id", "event_year", "p_treated", "p_control",
                     "distance"});
        for (const auto& p : m.pairs) {
            w.field(ctx.panel.firm_ids[p.treated_firm]);
            w.field(ctx.panel.firm_ids[p.control_firm]);
            w.field(p.event_year);
            w.field(p.p_treated);
            w.field(p.p_control);
            w.field(p.distance);
            w.end_row();
        }
    }
    {
        std::vector<std::string> cov = {"size", "capint", "tfp", "age"};
        if (!have_age)
            cov.pop_back();
        auto rows = psm::balance_diagnostics(ctx.panel, m, cov);
        CsvWriter w(out_path(ctx, "balance.csv"), ctx.manifest,
                    {"covariate", "phase", "mean_treated", "mean_control", "pct_bias", "t",
                     "p", "variance_ratio", "flag"});
        for (const auto& r : rows) {
            w.field(r.covariate);
            w.field(std::string(r.after ? "after" : "before"));
            w.field(r.mean_treated);
            w.field(r.mean_control);
            w.field(r.pct_bias);
            w.field(r.t_stat);
            w.field(r.p_value);
            w.field(r.variance_ratio);
            w.field(std::string(r.undefined ? "undefined" : (r.flagged ? "*" : "")));
            w.end_row();
        }
    }
    {
        psm::TwfeOptions to;
        if (!have_age)
            to.controls.erase(std::remove(to.controls.begin(), to.controls.end(), "age"),
                              to.controls.end());
        psm::TwfeResult res = psm::twfe_did(ctx.panel, m, y, to);
        CsvWriter w(out_path(ctx, "twfe_results.csv"), ctx.manifest,
                    {"outcome", "coefficient", "se", "n_obs", "treated_obs",
                     "untreated_obs", "matching", "matching_unit"});
        w.field(name);
        w.field(res.beta3);
        w.field(res.se);
        w.field(res.n_obs);
        w.field(res.n_treated_obs);
        w.field(res.n_control_obs);
        w.field(std::string("yes"));
        w.field(std::string("firm"));
        w.end_row();
    }
}

void stage_report(Ctx& ctx) {
    // the dashboard reads the overall effects; when the did stage did not run
    // in this invocation its artifact is reloaded
    if (ctx.overall.empty()) {
        const std::string path = out_path(ctx, "did_overall.csv");
        if (!fs::exists(path))
            throw DataError("report: did_overall.csv not found; run the did stage first");
        CsvTable t = read_csv(path);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            OutcomeResult res;
            res.name = t.cell(r, t.col("outcome"));
            res.estimate = parse_double(t.cell(r, t.col("estimate")), path);
            res.se = parse_double(t.cell(r, t.col("se")), path);
            res.ci_lo = parse_double(t.cell(r, t.col("ci_low")), path);
            res.ci_hi = parse_double(t.cell(r, t.col("ci_high")), path);
            res.p_value = parse_double(t.cell(r, t.col("p_value")), path);
            res.n_treated_firms = parse_int(t.cell(r, t.col("n_treated_firms")), path);
            res.n_obs = parse_int(t.cell(r, t.col("n_obs")), path);
            ctx.overall.push_back(res);
        }
    }
    {
        CsvWriter w(out_path(ctx, "dashboard.csv"), ctx.manifest,
                    {"outcome", "estimate", "se", "p_value", "stars", "n_treated_firms",
                     "n_obs"});
        for (const auto& r : ctx.overall) {
            w.field(r.name);
            w.field(r.estimate);
            w.field(r.se);
            w.field(r.p_value);
            w.field(stars(r.p_value));
            w.field(r.n_treated_firms);
            w.field(r.n_obs);
            w.end_row();
        }
    }
    {
        std::ostringstream os;
        os << "Average treatment effect on the treated: dashboard of firm-level outcomes\n";
        for (std::size_t bank = 0; bank < ctx.overall.size(); bank += 5) {
            const std::size_t hi = std::min(bank + 5, ctx.overall.size());
            os << "\n" << "VARIABLES     ";
            for (std::size_t i = bank; i < hi; ++i) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%20s", ctx.overall[i].name.c_str());
                os << buf;
            }
            os << "\nATET          ";
            for (std::size_t i = bank; i < hi; ++i) {
                char buf[32];
                std::string v = format_double(ctx.overall[i].estimate).substr(0, 9) +
                                stars(ctx.overall[i].p_value);
                std::snprintf(buf, sizeof(buf), "%20s", v.c_str());
                os << buf;
            }
            os << "\n              ";
            for (std::size_t i = bank; i < hi; ++i) {
                char buf[32];
                std::string v = "(" + format_double(ctx.overall[i].se).substr(0, 8) + ")";
                std::snprintf(buf, sizeof(buf), "%20s", v.c_str());
                os << buf;
            }
            os << "\nObservations  ";
            for (std::size_t i = bank; i < hi; ++i) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%20lld", ctx.overall[i].n_obs);
                os << buf;
            }
            os << "\n";
        }
        os << "\nStandard errors (firm-clustered multiplier bootstrap) in parentheses.\n";
        os << "*** p<0.01, ** p<0.05, * p<0.1\n";
        write_text_file(out_path(ctx, "dashboard.txt"), ctx.manifest, os.str());
    }
    if (ctx.event) {
        CsvWriter w(out_path(ctx, "event_study_plot.csv"), ctx.manifest,
                    {"e", "estimate", "ci_low", "ci_high"});
        const auto& es = *ctx.event;
        for (std::size_t j = 0; j < es.by_exposure.index.size(); ++j) {
            w.field(es.by_exposure.index[j]);
            w.field(es.by_exposure.estimates[j]);
            w.field(es.by_exposure.ci_low[j]);
            w.field(es.by_exposure.ci_high[j]);
            w.end_row();
        }
    } else if (!fs::exists(out_path(ctx, "event_study.csv"))) {
        std::cerr << "warning: no event-study results; plot data omitted\n";
    }
}

// ------------------------------------------------------------- launch check

void validate_inputs(const Ctx& ctx, const std::vector<std::string>& stages) {
    std::set<std::string> produced;
    for (const auto& st : stages) {
        std::vector<std::string> needs;
        if (st == "simulate") {
            produced.insert({"firms", "deflators", "treatments"});
            continue;
        }
        if (st == "estimate-prodfn" || st == "markups" || st == "did" ||
            st == "event-study" || st == "psm-did")
            needs = {"firms", "deflators"};
        if (st == "did" || st == "event-study" || st == "psm-did" || st == "classify")
            needs.push_back("treatments");
        if (st == "classify" ||
            (ctx.cfg.get("deal_class", "all") != "all" &&
             (st == "did" || st == "event-study" || st == "psm-did"))) {
            const std::string io = input_path(ctx, "io_table", "io_table.csv");
            if (!fs::exists(io))
                throw ConfigError("missing input file: " + io);
            const std::string br = ctx.cfg.get("industry_bridge", "data/industry_bridge.csv");
            if (!fs::exists(br))
                throw ConfigError("missing input file: " + br);
        }
        for (const auto& key : needs) {
            if (produced.count(key))
                continue;
            const std::string path = input_path(ctx, key, key + ".csv");
            if (!fs::exists(path))
                throw ConfigError("missing input file for stage " + st + ": " + path);
        }
    }
}

} // namespace

RunResult run(const RunConfig& config, const std::string& only_stage) {
    RunResult result;
    Ctx ctx;
    ctx.cfg = config;
    ctx.seed = static_cast<std::uint64_t>(config.get_int("seed", 1));
    ctx.outdir = config.get("out", "out");
    ctx.manifest = make_manifest(config, ctx.seed);

    std::vector<std::string> requested =
        only_stage.empty() ? config.get_list("stages") : std::vector<std::string>{only_stage};
    std::string current;
    try {
        if (requested.empty())
            throw ConfigError("no stages requested (set 'stages' or pass a verb)");
        // order and validate
        std::vector<std::string> stages;
        for (const auto& st : stage_order())
            for (const auto& r : requested)
                if (r == st)
                    stages.push_back(st);
        if (stages.size() != requested.size()) {
            std::set<std::string> known(stage_order().begin(), stage_order().end());
            for (const auto& r : requested)
                if (!known.count(r))
                    throw ConfigError("unknown stage: " + r);
        }
        fs::create_directories(ctx.outdir);
        validate_inputs(ctx, stages);
        const std::string failed_marker = out_path(ctx, "FAILED");
        if (fs::exists(failed_marker))
            fs::remove(failed_marker);

        for (const auto& st : stages) {
            current = st;
            if (st == "simulate") stage_simulate(ctx);
            else if (st == "estimate-prodfn") stage_prodfn(ctx);
            else if (st == "markups") stage_markups(ctx);
            else if (st == "classify") stage_classify(ctx);
            else if (st == "did") stage_did(ctx);
            else if (st == "event-study") stage_event_study(ctx);
            else if (st == "psm-did") stage_psm(ctx);
            else if (st == "report") stage_report(ctx);
        }
        return result;
    } catch (const ConfigError& e) {
        result.exit_code = 2;
        result.error = e.what();
    } catch (const DataError& e) {
        result.exit_code = 3;
        result.error = e.what();
    } catch (const EstimationError& e) {
        result.exit_code = 4;
        result.error = e.what();
    } catch (const std::exception& e) {
        result.exit_code = 4;
        result.error = e.what();
    }
    result.failed_stage = current;
    if (!current.empty()) {
        // partial outputs stay on disk next to the marker
        try {
            write_text_file(out_path(ctx, "FAILED"), ctx.manifest,
                            current + ": " + result.error + "\n");
        } catch (...) {
        }
    }
    std::cerr << "error" << (current.empty() ? "" : " in stage " + current) << ": "
              << result.error << "\n";
    return result;
}

} // namespace firmfx::pipeline
