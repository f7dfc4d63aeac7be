#include "stages.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vesseltopo/classify.hpp"
#include "vesseltopo/distance.hpp"
#include "vesseltopo/forest_io.hpp"
#include "vesseltopo/metaimage.hpp"

namespace vtopo::cli {
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config

std::string order_name(EikonalOrder o) { return o == EikonalOrder::First ? "first" : "second"; }

// Reads keys of one JSON object, rejecting unknown ones on finish().
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    [[nodiscard]] bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    template <typename T>
    void read(const std::string& k, T& out) {
        if (!has(k)) return;
        try {
            out = j_.at(k).get<T>();
        } catch (const Json::exception&) {
            throw ConfigError(key(k) + ": wrong type (" + std::string(j_.at(k).type_name()) + ")");
        }
    }

    void read_path(const std::string& k, std::optional<fs::path>& out) {
        std::string s;
        if (!has(k)) return;
        read(k, s);
        out = s;
    }

    [[nodiscard]] Section sub(const std::string& k) {
        seen_.insert(k);
        static const Json empty = Json::object();
        return Section(j_.contains(k) ? j_.at(k) : empty, key(k));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(key(k) + ": unknown key");
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Vec3 to_vec3(const std::vector<double>& v, const std::string& key) {
    if (v.size() != 3) throw ConfigError(key + ": expected 3 numbers");
    return {v[0], v[1], v[2]};
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json path_or_null(const std::optional<fs::path>& p) { return p ? Json(p->generic_string()) : Json(nullptr); }

// ---------------------------------------------------------------- artifacts

class StageRun {
public:
    StageRun(const PipelineConfig& config, Stage stage, std::string name, std::ostream& log)
        : config_(config), stage_(stage), name_(std::move(name)), log_(log) {
        std::error_code ec;
        fs::create_directories(dir(), ec);
        if (ec) throw IoError("cannot create " + dir().string() + ": " + ec.message());
        log_ << "[" << name_ << "] start\n";
    }

    [[nodiscard]] fs::path dir() const { return config_.workdir / name_; }
    fs::path out(const std::string& file) {
        outputs_.push_back(dir() / file);
        return outputs_.back();
    }
    void input(const fs::path& p) { inputs_.push_back(p); }
    void note(const std::string& k, Json v) { notes_[k] = std::move(v); }

    void finish() {
        Json doc{{"stage", name_}, {"command", to_string(stage_)}};
        doc["inputs"] = describe(inputs_);
        doc["outputs"] = describe(outputs_);
        if (!notes_.empty()) doc["summary"] = notes_;
        doc["settings"] = Json::parse(config_to_json(config_));
        std::ofstream f(dir() / "manifest.json", std::ios::binary);
        if (!f) throw IoError("cannot write " + (dir() / "manifest.json").string());
        f << doc.dump(1) << "\n";
        log_ << "[" << name_ << "] done, " << outputs_.size() << " artifacts\n";
    }

private:
    Json describe(const std::vector<fs::path>& files) const {
        Json arr = Json::array();
        for (const auto& p : files) {
            std::string shown = p.generic_string();
            const auto rel = p.lexically_relative(config_.workdir);
            if (!rel.empty() && *rel.begin() != "..") shown = rel.generic_string();
            Json entry{{"path", shown}};
            if (p.extension() == ".mhd") {
                auto raw = p;
                raw.replace_extension(".raw");
                entry["sha256"] = sha256_file(p);
                entry["payload_sha256"] = sha256_file(raw);
            } else {
                entry["sha256"] = sha256_file(p);
            }
            arr.push_back(entry);
        }
        return arr;
    }

    const PipelineConfig& config_;
    Stage stage_;
    std::string name_;
    std::ostream& log_;
    std::vector<fs::path> inputs_, outputs_;
    Json notes_ = Json::object();
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path need(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw MissingPrerequisite(what + " not found at " + p.string());
    return p;
}

fs::path synth_dir(const PipelineConfig& c) { return c.workdir / "synth"; }
fs::path topo_forest(const PipelineConfig& c) { return c.workdir / "topo" / "forest.json"; }
fs::path refined_labels(const PipelineConfig& c) { return c.workdir / "refine" / "labels_refined.tsv"; }

// The mask either comes from the config or from a previous `synth` run.
fs::path mask_path(const PipelineConfig& c) {
    if (c.mask) return need(*c.mask, "mask (paths.mask)");
    const auto p = synth_dir(c) / "mask.mhd";
    if (!fs::exists(p)) {
        throw MissingPrerequisite("mask: set paths.mask or run `synth` first (expected " + p.string() + ")");
    }
    return p;
}

bool has_truth(const PipelineConfig& c) { return !c.mask && fs::exists(synth_dir(c) / "case.json"); }

std::string case_to_json(const SynthCase& sc) {
    Json segs = Json::array();
    for (const auto& s : sc.segments) {
        segs.push_back({{"start", vec_json(s.start)},
                        {"end", vec_json(s.end)},
                        {"start_radius", s.start_radius},
                        {"end_radius", s.end_radius},
                        {"label", to_string(s.label)},
                        {"level", s.level},
                        {"parent", s.parent}});
    }
    Json doc{{"seed", sc.spec.seed},
             {"artery_root", vec_json(sc.artery_root)},
             {"vein_root", vec_json(sc.vein_root)},
             {"terminal_count", sc.terminal_count()},
             {"bifurcation_count", sc.bifurcation_count()},
             {"segments", segs}};
    return doc.dump(1) + "\n";
}

SynthCase load_case(const PipelineConfig& c) {
    const auto dir = synth_dir(c);
    SynthCase sc;
    sc.spec = c.synth;
    try {
        const auto doc = Json::parse(read_file(need(dir / "case.json", "synthetic case")));
        sc.artery_root = to_vec3(doc.at("artery_root").get<std::vector<double>>(), "artery_root");
        sc.vein_root = to_vec3(doc.at("vein_root").get<std::vector<double>>(), "vein_root");
        for (const auto& js : doc.at("segments")) {
            TubeSegment s;
            s.start = to_vec3(js.at("start").get<std::vector<double>>(), "start");
            s.end = to_vec3(js.at("end").get<std::vector<double>>(), "end");
            s.start_radius = js.at("start_radius").get<double>();
            s.end_radius = js.at("end_radius").get<double>();
            s.label = vessel_label_from_string(js.at("label").get<std::string>());
            s.level = js.at("level").get<int>();
            s.parent = js.at("parent").get<int>();
            sc.segments.push_back(s);
        }
    } catch (const Json::exception& e) {
        throw FormatError((dir / "case.json").string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError((dir / "case.json").string() + ": " + e.what());
    }
    sc.mask = load_mask(need(dir / "mask.mhd", "synthetic mask"));
    sc.truth = load_mask(need(dir / "truth.mhd", "synthetic truth volume"));
    return sc;
}

Provenance declared_provenance(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("#provenance=", 0) == 0) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            try {
                return provenance_from_string(line.substr(12));
            } catch (const InvalidArgument& e) {
                throw FormatError(path.string() + ": " + e.what());
            }
        }
    }
    throw FormatError(path.string() + ": missing '#provenance=' header");
}

// ---------------------------------------------------------------- stages

void stage_synth(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Synth, "synth", log);
    SynthSpec spec = c.synth;
    spec.seed = c.seed;
    const auto sc = generate(spec);
    save_volume(sc.mask, run.out("mask.mhd"));
    save_volume(sc.truth, run.out("truth.mhd"));
    write_file(run.out("case.json"), case_to_json(sc));
    run.note("terminal_count", sc.terminal_count());
    run.note("bifurcation_count", sc.bifurcation_count());
    run.note("foreground_voxels", count_foreground(sc.mask));
    run.finish();
}

void stage_topo(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Topo, "topo", log);
    const auto mp = mask_path(c);
    run.input(mp);
    const auto mask = load_mask(mp);
    std::optional<FloatVolume> intensity;
    if (c.intensity) {
        run.input(need(*c.intensity, "intensity volume (paths.intensity)"));
        intensity = load_float_volume(*c.intensity);
    }
    std::vector<Vec3> hints = c.root_hints;
    if (hints.empty() && has_truth(c)) {
        const auto sc = load_case(c);
        run.input(synth_dir(c) / "case.json");
        hints = {sc.artery_root, sc.vein_root};
    }
    const auto result = extract_topology(mask, intensity ? &*intensity : nullptr, hints, c.topology);
    validate_forest(result.forest);
    save_forest(result.forest, run.out("forest.json"));
    save_volume(result.dt, run.out("dt.mhd"));
    save_volume(result.enhanced, run.out("enhanced.mhd"));

    Json unrepaired = Json::array();
    for (const auto& [id, why] : result.unrepaired) unrepaired.push_back({{"id", id}, {"reason", why}});
    const auto deg = result.forest.degrees();
    Json report{{"nodes", result.forest.size()},
                {"edges", result.forest.edges.size()},
                {"roots", result.forest.roots},
                {"terminals", std::count(deg.begin(), deg.end(), 1u)},
                {"bifurcations", std::count_if(deg.begin(), deg.end(), [](std::size_t d) { return d >= 3; })},
                {"flagged", result.flagged},
                {"repaired", result.repaired},
                {"unrepaired", unrepaired}};
    write_file(run.out("repair.json"), report.dump(1) + "\n");
    run.note("nodes", result.forest.size());
    run.note("components", result.forest.roots.size());
    run.finish();
}

void stage_export(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Export, "export", log);
    const auto forest = load_forest(need(topo_forest(c), "topology forest (run `topo`)"));
    run.input(topo_forest(c));
    const auto enh_path = need(c.workdir / "topo" / "enhanced.mhd", "enhanced volume (run `topo`)");
    run.input(enh_path);
    const auto enhanced = load_float_volume(enh_path);
    FloatVolume original;
    if (c.intensity) {
        run.input(need(*c.intensity, "intensity volume (paths.intensity)"));
        original = load_float_volume(*c.intensity);
    } else {
        const auto mp = mask_path(c);
        run.input(mp);
        original = to_float(load_mask(mp));
    }
    std::optional<LabelTable> labels;
    if (has_truth(c)) {
        const auto sc = load_case(c);
        run.input(synth_dir(c) / "case.json");
        labels = match_truth(forest, sc).labels;
    }
    const double spacing = original.spacing().minCoeff();
    const auto po = extract_patches(original, forest, spacing);
    const auto pe = extract_patches(enhanced, forest, spacing);
    export_dataset(run.dir() / "dataset", forest, po, pe, labels ? &*labels : nullptr, spacing);
    for (const char* f : {"manifest.json", "patches_orig.bin", "patches_enh.bin", "neighbors.json", "terminal_ids.json"}) {
        run.out(std::string("dataset/") + f);
    }
    if (labels) run.out("dataset/labels.tsv");
    run.note("labeled", labels.has_value());
    run.finish();
}

void stage_classify(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Pipeline, "classify", log);
    if (!has_truth(c)) {
        throw MissingPrerequisite(
            "probabilities: the oracle classifier needs synthetic truth; set paths.probabilities or run `synth`");
    }
    const auto forest = load_forest(need(topo_forest(c), "topology forest (run `topo`)"));
    run.input(topo_forest(c));
    run.input(synth_dir(c) / "case.json");
    const auto truth = match_truth(forest, load_case(c));
    save_probabilities(oracle_classifier(truth.labels, c.flip_rate, c.seed), run.out("probabilities.tsv"));
    run.note("flip_rate", c.flip_rate);
    run.finish();
}

void stage_refine(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Refine, "refine", log);
    const auto forest = load_forest(need(topo_forest(c), "topology forest (run `topo`)"));
    run.input(topo_forest(c));

    ProbabilityTable table;
    if (c.probabilities) {
        run.input(need(*c.probabilities, "probability file (--probabilities)"));
        const auto declared = declared_provenance(*c.probabilities);
        if (declared == Provenance::TerminalPipe) {
            throw ConfigError("paths.probabilities: a terminal-pipe table cannot stand alone; pass it as "
                              "paths.terminal_probabilities");
        }
        table = ingest_probabilities(*c.probabilities, forest, declared);
        if (c.terminal_probabilities) {
            run.input(need(*c.terminal_probabilities, "terminal-pipe probability file"));
            const auto term = ingest_probabilities(*c.terminal_probabilities, forest, Provenance::TerminalPipe);
            table = mutual_correct(table, term, terminal_branch_ids(extract_branches(forest)));
        }
    } else {
        const auto fallback = c.workdir / "classify" / "probabilities.tsv";
        if (!fs::exists(fallback)) {
            throw MissingPrerequisite("probability file: pass --probabilities <tsv> (or paths.probabilities); "
                                      "nothing found at " + fallback.string());
        }
        run.input(fallback);
        table = ingest_probabilities(fallback, forest, declared_provenance(fallback));
    }
    save_probabilities(table, run.out("probabilities.tsv"));

    const auto raw = threshold_labels(table, forest.size());
    const auto subtrees = extract_subtrees(forest);
    const auto branches = extract_branches(forest);
    const auto report = score(forest, subtrees, branches, raw);
    const auto refined = refine(forest, subtrees, branches, raw, report, c.strategy);
    save_labels(raw, run.out("labels_raw.tsv"));
    save_labels(refined, run.out("labels_refined.tsv"));
    write_file(run.out("confidence.json"), report_to_json(report, subtrees, branches));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) changed += raw.labels[i] != refined.labels[i];
    run.note("strategy", to_string(c.strategy));
    run.note("provenance", to_string(table.provenance));
    run.note("relabeled", changed);
    run.finish();
}

void stage_reconstruct(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Reconstruct, "reconstruct", log);
    const auto forest = load_forest(need(topo_forest(c), "topology forest (run `topo`)"));
    run.input(topo_forest(c));
    const auto labels = load_labels(need(refined_labels(c), "refined labels (run `refine`)"));
    run.input(refined_labels(c));
    const auto mp = mask_path(c);
    run.input(mp);
    const auto mask = load_mask(mp);
    const auto volume = reconstruct_labels(forest, labels, mask.grid());
    save_volume(volume, run.out("labels.mhd"));
    if (c.hilum_artery || c.hilum_vein) {
        auto load_or_empty = [&](const std::optional<fs::path>& p, const std::string& key) {
            if (!p) return VesselMask(mask.grid());
            run.input(need(*p, "hilum mask (" + key + ")"));
            return load_mask(*p);
        };
        const auto fused = fuse_hilum(volume, load_or_empty(c.hilum_artery, "paths.hilum_artery"),
                                      load_or_empty(c.hilum_vein, "paths.hilum_vein"));
        save_volume(fused, run.out("labels_fused.mhd"));
    }
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < volume.size(); ++i) labeled += volume[i] != 0;
    run.note("labeled_voxels", labeled);
    run.finish();
}

Json metrics_json(const Metrics& m) {
    return Json{{"tp", m.tp},
                {"tn", m.tn},
                {"fp", m.fp},
                {"fn", m.fn},
                {"accuracy", m.accuracy},
                {"sensitivity", m.sensitivity},
                {"specificity", m.specificity}};
}

void stage_eval(const PipelineConfig& c, std::ostream& log) {
    StageRun run(c, Stage::Eval, "eval", log);
    if (!has_truth(c)) {
        throw MissingPrerequisite("ground truth: eval scores against a synthetic case; run `synth` and leave "
                                  "paths.mask unset");
    }
    const auto forest = load_forest(need(topo_forest(c), "topology forest (run `topo`)"));
    run.input(topo_forest(c));
    const auto raw_path = need(c.workdir / "refine" / "labels_raw.tsv", "raw labels (run `refine`)");
    const auto refined = load_labels(need(refined_labels(c), "refined labels (run `refine`)"));
    const auto raw = load_labels(raw_path);
    run.input(raw_path);
    run.input(refined_labels(c));
    run.input(synth_dir(c) / "case.json");
    const auto truth = match_truth(forest, load_case(c));

    std::vector<std::uint8_t> include = truth.matched;
    std::size_t hilum = 0;
    for (const auto* p : {&c.hilum_artery, &c.hilum_vein}) {
        if (!*p) continue;
        run.input(need(**p, "hilum mask"));
        const auto h = load_mask(**p);
        for (const auto& n : forest.nodes) {
            const Voxel v = h.grid().nearest_voxel(n.pos);
            if (h.dims().contains(v) && h.at(v) && include[n.id]) {
                include[n.id] = 0;
                ++hilum;
            }
        }
    }
    const auto mr = evaluate(raw, truth.labels, include);
    const auto mf = evaluate(refined, truth.labels, include);
    Json doc{{"strategy", to_string(c.strategy)},
             {"seed", c.seed},
             {"particles", forest.size()},
             {"unmatched", truth.unmatched},
             {"unmatched_fraction", truth.unmatched_fraction()},
             {"hilum_excluded", hilum},
             {"raw", metrics_json(mr)},
             {"refined", metrics_json(mf)}};
    write_file(run.out("metrics.json"), doc.dump(1) + "\n");
    std::ostringstream tsv;
    tsv << "#seed\tstrategy\taccuracy\tsensitivity\tspecificity\ttp\ttn\tfp\tfn\traw_accuracy\tunmatched\n";
    tsv << c.seed << '\t' << to_string(c.strategy) << '\t' << std::setprecision(17) << mf.accuracy << '\t'
        << mf.sensitivity << '\t' << mf.specificity << '\t' << mf.tp << '\t' << mf.tn << '\t' << mf.fp << '\t'
        << mf.fn << '\t' << mr.accuracy << '\t' << truth.unmatched << '\n';
    write_file(run.out("metrics.tsv"), tsv.str());
    run.note("accuracy", mf.accuracy);
    run.note("raw_accuracy", mr.accuracy);
    run.finish();
    log << "[eval] accuracy " << mf.accuracy << " (raw " << mr.accuracy << ")\n";
}

}  // namespace

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Topo: return "topo";
        case Stage::Export: return "export";
        case Stage::Refine: return "refine";
        case Stage::Reconstruct: return "reconstruct";
        case Stage::Synth: return "synth";
        case Stage::Eval: return "eval";
        case Stage::Pipeline: return "pipeline";
    }
    throw InvalidArgument("invalid stage");
}

Stage stage_from_string(const std::string& s) {
    for (Stage st : {Stage::Topo, Stage::Export, Stage::Refine, Stage::Reconstruct, Stage::Synth, Stage::Eval,
                     Stage::Pipeline}) {
        if (to_string(st) == s) return st;
    }
    throw ConfigError("unknown stage '" + s + "'");
}

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto upto = text.substr(0, std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size()));
        const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
        const auto col = upto.size() - (upto.rfind('\n') == std::string::npos ? 0 : upto.rfind('\n') + 1) + 1;
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON syntax error");
    }
    PipelineConfig c;
    Section root(doc, "");
    std::string workdir = c.workdir.generic_string();
    root.read("workdir", workdir);
    c.workdir = workdir;
    root.read("seed", c.seed);

    auto paths = root.sub("paths");
    paths.read_path("mask", c.mask);
    paths.read_path("intensity", c.intensity);
    paths.read_path("hilum_artery", c.hilum_artery);
    paths.read_path("hilum_vein", c.hilum_vein);
    paths.read_path("probabilities", c.probabilities);
    paths.read_path("terminal_probabilities", c.terminal_probabilities);
    paths.finish();

    auto msfm = root.sub("msfm");
    std::string order = order_name(c.topology.repair.order);
    msfm.read("order", order);
    if (order == "first") {
        c.topology.repair.order = EikonalOrder::First;
    } else if (order == "second") {
        c.topology.repair.order = EikonalOrder::MultiStencilSecond;
    } else {
        throw ConfigError(msfm.key("order") + ": expected first or second, got '" + order + "'");
    }
    msfm.read("speed_exponent", c.topology.speed_exponent);
    msfm.read("accept_threshold", c.accept_threshold);
    require(c.topology.speed_exponent > 0.0, msfm.key("speed_exponent"), "must be positive");
    require(c.accept_threshold > 0.0 && c.accept_threshold <= 1.0, msfm.key("accept_threshold"), "must lie in (0,1]");
    msfm.finish();

    auto sampler = root.sub("sampler");
    auto& sp = c.topology.sampler;
    sampler.read("smoothing_sigma", sp.smoothing_sigma);
    sampler.read("max_gradient", sp.max_gradient);
    sampler.read("plane_tolerance", sp.plane_tolerance);
    sampler.read("vesselness_scales", c.topology.vesselness_scales);
    require(sp.smoothing_sigma >= 0.0, sampler.key("smoothing_sigma"), "must be non-negative");
    require(sp.max_gradient > 0.0, sampler.key("max_gradient"), "must be positive");
    require(sp.plane_tolerance > 0.0 && sp.plane_tolerance <= 1.0, sampler.key("plane_tolerance"), "must lie in (0,1]");
    require(!c.topology.vesselness_scales.empty() &&
                std::all_of(c.topology.vesselness_scales.begin(), c.topology.vesselness_scales.end(),
                            [](double s) { return s > 0.0; }),
            sampler.key("vesselness_scales"), "needs at least one positive scale");
    sampler.finish();

    auto topo = root.sub("topology");
    topo.read("spur_length_factor", c.topology.spur_length_factor);
    topo.read("min_component", c.topology.min_component);
    topo.read("repair_min_reach_mm", c.topology.repair.min_reach_mm);
    topo.read("repair_reach_scale_factor", c.topology.repair.reach_scale_factor);
    topo.read("backtrace_step", c.topology.repair.backtrace_step);
    std::vector<std::vector<double>> hints;
    topo.read("root_hints", hints);
    for (const auto& h : hints) c.root_hints.push_back(to_vec3(h, topo.key("root_hints")));
    require(c.topology.spur_length_factor >= 0.0, topo.key("spur_length_factor"), "must be non-negative");
    require(c.topology.repair.min_reach_mm > 0.0, topo.key("repair_min_reach_mm"), "must be positive");
    require(c.topology.repair.reach_scale_factor >= 0.0, topo.key("repair_reach_scale_factor"), "must be non-negative");
    require(c.topology.repair.backtrace_step > 0.0, topo.key("backtrace_step"), "must be positive");
    topo.finish();

    auto cls = root.sub("classifier");
    std::string source = "oracle";
    cls.read("source", source);
    if (source == "oracle") {
        c.classifier = ClassifierSource::Oracle;
    } else if (source == "file") {
        c.classifier = ClassifierSource::File;
    } else {
        throw ConfigError(cls.key("source") + ": expected oracle or file, got '" + source + "'");
    }
    cls.read("flip_rate", c.flip_rate);
    require(c.flip_rate >= 0.0 && c.flip_rate < 0.5, cls.key("flip_rate"), "must lie in [0, 0.5)");
    cls.finish();

    auto opt = root.sub("optimizer");
    std::string strategy = to_string(c.strategy);
    opt.read("strategy", strategy);
    try {
        c.strategy = strategy_from_string(strategy);
    } catch (const InvalidArgument& e) {
        throw ConfigError(opt.key("strategy") + ": " + e.what());
    }
    opt.finish();

    auto syn = root.sub("synth");
    auto& s = c.synth;
    syn.read("depth", s.depth);
    syn.read("trunk_radius", s.trunk_radius);
    syn.read("radius_decay", s.radius_decay);
    syn.read("trunk_length", s.trunk_length);
    syn.read("length_decay", s.length_decay);
    syn.read("min_angle_deg", s.min_angle_deg);
    syn.read("max_angle_deg", s.max_angle_deg);
    std::vector<int> dims{s.dims.nx, s.dims.ny, s.dims.nz};
    syn.read("dims", dims);
    require(dims.size() == 3, syn.key("dims"), "expected 3 integers");
    s.dims = {dims[0], dims[1], dims[2]};
    std::vector<double> spacing{s.spacing.x(), s.spacing.y(), s.spacing.z()};
    syn.read("spacing", spacing);
    s.spacing = to_vec3(spacing, syn.key("spacing"));
    syn.read("intertwine_offset", s.intertwine_offset);
    syn.read("clearance", s.clearance);
    syn.read("max_attempts", s.max_attempts);
    syn.finish();
    s.seed = c.seed;
    try {
        validate(s);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("synth: ") + e.what());
    }
    root.finish();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return parse_config(s.str(), path.string());
}

std::string config_to_json(const PipelineConfig& c) {
    const auto& t = c.topology;
    Json hints = Json::array();
    for (const auto& h : c.root_hints) hints.push_back(vec_json(h));
    Json doc{
        {"workdir", c.workdir.generic_string()},
        {"seed", c.seed},
        {"paths",
         {{"mask", path_or_null(c.mask)},
          {"intensity", path_or_null(c.intensity)},
          {"hilum_artery", path_or_null(c.hilum_artery)},
          {"hilum_vein", path_or_null(c.hilum_vein)},
          {"probabilities", path_or_null(c.probabilities)},
          {"terminal_probabilities", path_or_null(c.terminal_probabilities)}}},
        {"msfm",
         {{"order", order_name(t.repair.order)},
          {"speed_exponent", t.speed_exponent},
          {"accept_threshold", c.accept_threshold}}},
        {"sampler",
         {{"smoothing_sigma", t.sampler.smoothing_sigma},
          {"max_gradient", t.sampler.max_gradient},
          {"plane_tolerance", t.sampler.plane_tolerance},
          {"vesselness_scales", t.vesselness_scales}}},
        {"topology",
         {{"spur_length_factor", t.spur_length_factor},
          {"min_component", t.min_component},
          {"repair_min_reach_mm", t.repair.min_reach_mm},
          {"repair_reach_scale_factor", t.repair.reach_scale_factor},
          {"backtrace_step", t.repair.backtrace_step},
          {"root_hints", hints}}},
        {"classifier",
         {{"source", c.classifier == ClassifierSource::Oracle ? "oracle" : "file"}, {"flip_rate", c.flip_rate}}},
        {"optimizer", {{"strategy", to_string(c.strategy)}}},
        {"synth",
         {{"depth", c.synth.depth},
          {"trunk_radius", c.synth.trunk_radius},
          {"radius_decay", c.synth.radius_decay},
          {"trunk_length", c.synth.trunk_length},
          {"length_decay", c.synth.length_decay},
          {"min_angle_deg", c.synth.min_angle_deg},
          {"max_angle_deg", c.synth.max_angle_deg},
          {"dims", {c.synth.dims.nx, c.synth.dims.ny, c.synth.dims.nz}},
          {"spacing", vec_json(c.synth.spacing)},
          {"intertwine_offset", c.synth.intertwine_offset},
          {"clearance", c.synth.clearance},
          {"max_attempts", c.synth.max_attempts}}}};
    return doc.dump(1) + "\n";
}

void run_stage(Stage stage, const PipelineConfig& c, std::ostream& log) {
    switch (stage) {
        case Stage::Synth: return stage_synth(c, log);
        case Stage::Topo: return stage_topo(c, log);
        case Stage::Export: return stage_export(c, log);
        case Stage::Refine: return stage_refine(c, log);
        case Stage::Reconstruct: return stage_reconstruct(c, log);
        case Stage::Eval: return stage_eval(c, log);
        case Stage::Pipeline:
            stage_topo(c, log);
            stage_export(c, log);
            if (!c.probabilities) {
                if (c.classifier == ClassifierSource::File) {
                    throw MissingPrerequisite("probability file: classifier.source is 'file' but "
                                              "paths.probabilities is unset");
                }
                stage_classify(c, log);
            }
            stage_refine(c, log);
            stage_reconstruct(c, log);
            if (has_truth(c)) {
                stage_eval(c, log);
            } else {
                log << "[eval] skipped: no synthetic ground truth\n";
            }
            return;
    }
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const MissingPrerequisite*>(&e)) return 3;
    if (dynamic_cast<const NumericalError*>(&e)) return 4;
    return 1;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest initialization failed");
    }
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (f.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(f.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

}  // namespace vtopo::cli
