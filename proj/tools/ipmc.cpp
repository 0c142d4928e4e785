// Command-line front end: dataset generation, statistics, code enumeration,
// scheme derivation, evaluation, encoding and report merging.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ipmc/codec.hpp"
#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/dynlist.hpp"
#include "ipmc/entropy.hpp"
#include "ipmc/error.hpp"
#include "ipmc/parallel.hpp"
#include "ipmc/scheme.hpp"
#include "ipmc/search.hpp"

using json = nlohmann::ordered_json;
using namespace ipmc;

namespace {

struct Common {
  std::string profile = "hevc";
  int k = 0;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
};

SymbolSpace space_of(const Common& c) {
  if (c.profile == "hevc" || c.profile == "hevc-ext") return SymbolSpace::hevc();
  if (c.profile == "jem") return SymbolSpace::jem();
  if (c.profile == "custom") {
    if (c.k < 2) throw ValidationError("--profile custom needs --k >= 2");
    return SymbolSpace::generic(c.k);
  }
  throw ValidationError("unknown profile '" + c.profile + "' (expected hevc|hevc-ext|jem|custom)");
}

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--profile", c.profile, "hevc | hevc-ext | jem | custom")->capture_default_str();
  cmd->add_option("--k", c.k, "Symbol count for --profile custom");
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (default: IPMC_THREADS or all cores)");
  if (with_out) cmd->add_option("--out", c.out, "Output path (default: stdout)");
}

json spec_of(const std::string& action, const Common& c, json extra) {
  json j;
  j["action"] = action;
  j["profile"] = c.profile;
  j["k"] = space_of(c).k;
  j["seed"] = c.seed;
  for (auto& [key, value] : extra.items()) j[key] = value;
  return j;
}

/// Writes text with the experiment header to --out or stdout.
void emit(const Common& c, const json& spec, const std::string& body) {
  std::ostringstream text;
  text << "# spec: " << spec.dump() << "\n" << body;
  if (c.out.empty()) {
    std::cout << text.str();
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) throw Error("cannot write " + c.out);
  f << text.str();
  if (!f) throw Error("write failed: " + c.out);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::vector<Sample> read_input(const std::string& path, const SymbolSpace& space) {
  if (path.empty()) throw ValidationError("--in is required");
  return load_samples(path, space);
}

ConditionalHistogram histogram_of(std::span<const Sample> samples, const SymbolSpace& space, const ContextSet& ctx) {
  HistogramBuilder b(space, ctx);
  for (const auto& s : samples) b.add(s.ctx, s.ipm);
  return std::move(b).finish();
}

Scheme scheme_arg(const std::string& name) {
  if (name == "anchor-hevc") return anchor_hevc();
  if (name == "anchor-jem") return anchor_jem();
  if (name == "fixture-five") return fixture_five_leaf();
  if (name == "fixture-four") return fixture_four_leaf_dynamic();
  return load_scheme(name);
}

/// "5" or "3..8".
std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ValidationError("bad range '" + s + "' (expected N or A..B)");
  }
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  SynthParams p;
};

void run_synth(const Common& c, SynthOpts o) {
  if (c.out.empty()) throw ValidationError("synth needs --out");
  o.p.seed = c.seed;
  const auto space = space_of(c);
  const auto samples = synth_dataset(space, o.p);
  save_samples(c.out, samples, space);
  std::cout << "# spec: "
            << spec_of("synth", c,
                       {{"width", o.p.width},
                        {"height", o.p.height},
                        {"copy_prob", o.p.copy_prob},
                        {"jitter_prob", o.p.jitter_prob},
                        {"nonangular_prob", o.p.nonangular_prob},
                        {"rd_alternates", o.p.rd_alternates},
                        {"rd_gap_mean", o.p.rd_gap_mean},
                        {"out", c.out}})
                   .dump()
            << "\nsamples\n"
            << samples.size() << "\n";
}

void run_stats(const Common& c, const std::string& in) {
  const auto space = space_of(c);
  const auto samples = read_input(in, space);
  const auto hist = histogram_of(samples, space, ContextSet({Context::L, Context::U}));
  std::vector<std::uint64_t> unavailable(kNumContexts, 0);
  std::uint64_t with_rd = 0;
  for (const auto& s : samples) {
    for (Context ctx : kAllContexts) unavailable[static_cast<std::size_t>(ctx)] += s.ctx[ctx] == kUnavailable;
    with_rd += !s.rd_candidates.empty();
  }
  std::ostringstream body;
  body << "key,value\n";
  body << "samples," << samples.size() << "\n";
  body << "lu_cells," << hist.cells().size() << "\n";
  body << "with_rd_candidates," << with_rd << "\n";
  for (Context ctx : kAllContexts)
    body << "unavailable_" << context_name(ctx) << "," << unavailable[static_cast<std::size_t>(ctx)] << "\n";
  const auto marginal = hist.marginal();
  for (int m = 0; m < space.k; ++m) body << "mode_" << m << "," << marginal[static_cast<std::size_t>(m)] << "\n";
  emit(c, spec_of("stats", c, {{"in", in}}), body.str());
}

void run_entropy(const Common& c, const std::string& in, const std::vector<std::string>& ctx_sets, bool with_codes) {
  const auto space = space_of(c);
  const auto samples = read_input(in, space);
  std::vector<CodeShape> codes;
  if (with_codes) codes = enumerate_codes(space, static_code_profile(space));
  std::ostringstream body;
  body << "contexts,samples,entropy,miller_madow,nonzero_bins,theoretical_bins";
  if (with_codes) body << ",code_based";
  body << "\n";
  for (const auto& text : ctx_sets) {
    const ContextSet set = ContextSet::parse(text == "none" ? "" : text);
    const auto hist = histogram_of(samples, space, set);
    const auto r = entropy(hist);
    body << '"' << (set.empty() ? "none" : set.to_string()) << '"' << "," << r.samples_used << ","
         << fmt(r.bits_per_symbol) << "," << fmt(r.bits_per_symbol + r.mm_correction) << "," << r.nonzero_bins
         << "," << fmt(r.theoretical_bins);
    if (with_codes) body << "," << fmt(code_based_entropy(hist, codes).bits_per_symbol);
    body << "\n";
  }
  emit(c, spec_of("entropy", c, {{"in", in}, {"contexts", ctx_sets}, {"code_based", with_codes}}), body.str());
}

struct CodesOpts {
  std::vector<int> mpm;
  int max_len = 0;
  int groups = 0;
  std::string rule;
  bool dynamic = false;
};

void run_codes(const Common& c, const CodesOpts& o) {
  const auto space = space_of(c);
  EnumerationParams p = o.dynamic ? dynamic_code_profile(space) : static_code_profile(space);
  if (!o.mpm.empty()) p.mpm_counts = o.mpm;
  if (o.max_len > 0) p.max_len = o.max_len;
  if (o.groups > 0) p.max_fl_groups = o.groups;
  if (o.rule == "any")
    p.rule = MpmLengthRule::Any;
  else if (o.rule == "not-longer")
    p.rule = MpmLengthRule::NotLonger;
  else if (o.rule == "shorter")
    p.rule = MpmLengthRule::Shorter;
  else if (!o.rule.empty())
    throw ValidationError("unknown --rule '" + o.rule + "' (expected any|not-longer|shorter)");
  const auto codes = enumerate_codes(space, p);
  std::ostringstream body;
  body << "mpm,shape,kraft\n";
  for (const auto& code : codes)
    body << code.mpm_lengths.size() << "," << code.to_string() << "," << kraft_sum(code).to_string() << "\n";
  emit(c,
       spec_of("codes", c,
               {{"mpm", p.mpm_counts}, {"max_len", p.max_len}, {"groups", p.max_fl_groups}, {"rule", o.rule},
                {"dynamic", o.dynamic}, {"count", codes.size()}}),
       body.str());
}

struct TreeOpts {
  std::string in;
  std::string leaves = "5";
  int depth = 4;
  bool multi = true;
  std::string method = "auto";
  int iterations = -1;
  int population = -1;
  std::string scheme_out;
};

void run_derive_tree(const Common& c, const TreeOpts& o) {
  const auto space = space_of(c);
  SearchConfig cfg;
  if (c.profile == "hevc")
    cfg = hevc_search_config();
  else if (c.profile == "hevc-ext")
    cfg = extended_hevc_search_config();
  else if (c.profile == "jem")
    cfg = jem_search_config();
  else
    throw ValidationError("derive-tree supports --profile hevc|hevc-ext|jem");
  const auto [lo, hi] = parse_range(o.leaves);
  if (lo < 1 || hi < lo) throw ValidationError("bad --leaves range");
  cfg.max_leaves = hi;
  cfg.max_depth = o.depth;
  cfg.multi_code = o.multi;
  cfg.genetic.seed = c.seed;
  cfg.genetic.threads = c.threads;
  if (o.iterations >= 0) cfg.genetic.iterations = o.iterations;
  if (o.population >= 0) cfg.genetic.population = o.population;
  const auto samples = read_input(o.in, space);
  const auto hist = histogram_of(samples, space, ContextSet({Context::L, Context::U}));
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);

  std::string method = o.method;
  if (method == "auto") method = hi <= 8 && o.depth <= 4 ? "exhaustive" : "genetic";
  std::vector<SearchResult> curve;
  if (method == "exhaustive")
    curve = exhaustive_tree_curve(ev, cfg);
  else if (method == "genetic")
    curve = genetic_tree_curve(ev, cfg);
  else
    throw ValidationError("unknown --method '" + method + "'");

  std::ostringstream body;
  body << "leaves,bits_per_ipm,total_bits,feasible,tree\n";
  for (int n = lo; n <= hi; ++n) {
    const auto& r = curve[static_cast<std::size_t>(n - 1)];
    body << n << "," << (r.feasible ? fmt(r.bits_per_ipm) : "") << "," << (r.feasible ? std::to_string(r.total_bits) : "")
         << "," << (r.feasible ? 1 : 0) << "," << r.tree.key() << "\n";
  }
  if (!o.scheme_out.empty()) {
    const auto& r = curve[static_cast<std::size_t>(hi - 1)];
    if (!r.feasible) throw Error("no feasible tree with " + std::to_string(hi) + " leaves");
    Scheme s = r.scheme;
    s.set_name("derived-" + std::to_string(hi));
    assign_cabac_groups(s, hist, 3);
    save_scheme(o.scheme_out, s);
  }
  emit(c,
       spec_of("derive-tree", c,
               {{"in", o.in}, {"leaves", o.leaves}, {"depth", o.depth}, {"multi_code", o.multi}, {"method", method},
                {"iterations", cfg.genetic.iterations}, {"population", cfg.genetic.population},
                {"scheme_out", o.scheme_out}}),
       body.str());
}

struct DynOpts {
  std::string in;
  int leaves = 4;
  int iterations = -1;
  int population = -1;
  std::string scheme_out;
  // multipass
  int passes = 4;
  double lambda = 2.0;
  std::string initial = "anchor-jem";
};

DynTreeConfig dyn_config(const Common& c, const DynOpts& o) {
  DynTreeConfig cfg = jem_dyntree_config();
  const auto space = space_of(c);
  if (space.k != 67) {
    cfg.rules = EvalRules{space, UnavailableRule::Keep, false};
    cfg.vocabulary = dynlist_vocabulary(space);
    cfg.codes = enumerate_codes(space, dynamic_code_profile(space));
    cfg.tests = jem_tests();
  }
  cfg.num_leaves = o.leaves;
  cfg.genetic.seed = c.seed;
  cfg.genetic.threads = c.threads;
  if (o.iterations >= 0) cfg.genetic.iterations = o.iterations;
  if (o.population >= 0) cfg.genetic.population = o.population;
  return cfg;
}

void run_derive_dynlist(const Common& c, const DynOpts& o) {
  const auto space = space_of(c);
  const auto cfg = dyn_config(c, o);
  const auto samples = read_input(o.in, space);
  const auto hist = histogram_of(samples, space, ContextSet::all());
  Scheme s = build_tree_dynlist(hist, cfg);
  s.set_name("dynlist-" + std::to_string(o.leaves));
  const auto rep = s.evaluate(hist);
  if (!o.scheme_out.empty()) save_scheme(o.scheme_out, s);
  std::ostringstream body;
  body << "name,k,leaves,samples,total_bits,bits_per_ipm\n";
  body << s.name() << "," << space.k << "," << s.leaves().size() << "," << rep.total_samples << "," << rep.total_bits
       << "," << fmt(rep.bits_per_ipm) << "\n";
  emit(c,
       spec_of("derive-dynlist", c,
               {{"in", o.in}, {"leaves", o.leaves}, {"iterations", cfg.genetic.iterations},
                {"population", cfg.genetic.population}, {"scheme_out", o.scheme_out}}),
       body.str());
}

void run_multipass(const Common& c, const DynOpts& o) {
  const auto space = space_of(c);
  MultipassParams mp;
  mp.passes = o.passes;
  mp.lambda = o.lambda;
  mp.tree = dyn_config(c, o);
  const auto samples = read_input(o.in, space);
  const auto res = multipass_train(samples, scheme_arg(o.initial), mp);
  if (!o.scheme_out.empty()) save_scheme(o.scheme_out, res.scheme);
  std::ostringstream body;
  body << "pass,ref,new,delta,flips\n";
  for (const auto& p : res.passes)
    body << p.pass << "," << fmt(p.ref_cost) << "," << fmt(p.new_cost) << "," << fmt(p.delta) << "," << p.flips << "\n";
  emit(c,
       spec_of("multipass", c,
               {{"in", o.in}, {"passes", o.passes}, {"lambda", o.lambda}, {"initial", o.initial},
                {"leaves", o.leaves}, {"iterations", mp.tree.genetic.iterations}, {"scheme_out", o.scheme_out}}),
       body.str());
}

void run_evaluate(const Common& c, const std::string& in, const std::string& scheme_name) {
  const Scheme s = scheme_arg(scheme_name);
  const auto space = s.space();
  Common cc = c;
  if (space.k != space_of(c).k) {
    cc.profile = "custom";
    cc.k = space.k;
  }
  const auto samples = read_input(in, space);
  const auto hist = histogram_of(samples, space, ContextSet::all());
  const auto rep = s.evaluate(hist);
  std::ostringstream body;
  body << "name,k,leaves,samples,total_bits,bits_per_ipm\n";
  body << (s.name().empty() ? scheme_name : s.name()) << "," << space.k << "," << s.leaves().size() << ","
       << rep.total_samples << "," << rep.total_bits << "," << fmt(rep.bits_per_ipm) << "\n";
  emit(cc, spec_of("evaluate", cc, {{"in", in}, {"scheme", scheme_name}}), body.str());
}

void run_encode(const Common& c, const std::string& in, const std::string& scheme_name) {
  if (c.out.empty()) throw ValidationError("encode needs --out");
  const Scheme s = scheme_arg(scheme_name);
  const auto samples = read_input(in, s.space());
  const auto blob = encode(s, samples);
  save_blob(c.out, blob);
  std::ostringstream body;
  body << "samples,payload_bits,bits_per_ipm\n"
       << blob.sample_count << "," << blob.payload_bits << ","
       << fmt(blob.sample_count ? static_cast<double>(blob.payload_bits) / static_cast<double>(blob.sample_count) : 0.0)
       << "\n";
  Common cc = c;
  cc.out.clear();
  if (s.space().k != space_of(c).k) {
    cc.profile = "custom";
    cc.k = s.space().k;
  }
  emit(cc, spec_of("encode", cc, {{"in", in}, {"scheme", scheme_name}, {"blob_out", c.out}}), body.str());
}

void run_decode(const Common& c, const std::string& blob_path, const std::string& ctx_path,
                const std::string& scheme_name) {
  const Scheme s = scheme_arg(scheme_name);
  const auto blob = load_blob(blob_path);
  const auto samples = read_input(ctx_path, s.space());
  std::vector<ContextTuple> ctx;
  ctx.reserve(samples.size());
  for (const auto& x : samples) ctx.push_back(x.ctx);
  const auto modes = decode(s, blob, ctx);
  std::ostringstream body;
  body << "ipm\n";
  for (int m : modes) body << m << "\n";
  Common cc = c;
  if (s.space().k != space_of(c).k) {
    cc.profile = "custom";
    cc.k = s.space().k;
  }
  emit(cc, spec_of("decode", cc, {{"blob", blob_path}, {"contexts", ctx_path}, {"scheme", scheme_name}}), body.str());
}

// ---------------------------------------------------------------------------
// report

struct CsvTable {
  json spec;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  CsvTable t;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# spec: ", 0) == 0) {
      try {
        t.spec = json::parse(line.substr(8));
      } catch (const json::exception& e) {
        throw ParseError(path + ": bad spec header: " + e.what());
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty())
      t.header = split_csv(line);
    else
      t.rows.push_back(split_csv(line));
  }
  if (t.spec.is_null()) throw ParseError(path + ": missing '# spec:' header");
  return t;
}

void run_report(const Common& c, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw CLI::ValidationError("report", "needs at least one input file");
  struct Row {
    std::string source, label;
    int k = 0;
    std::string leaves;
    double bits = 0.0;
    std::string flag;
  };
  std::vector<Row> rows;
  std::optional<int> k;
  for (const auto& path : inputs) {
    const auto t = read_table(path);
    const std::string action = t.spec.value("action", "");
    const int tk = t.spec.value("k", 0);
    if (k && *k != tk) throw ValidationError("inputs mix k=" + std::to_string(*k) + " and k=" + std::to_string(tk));
    k = tk;
    if (action == "evaluate" || action == "derive-dynlist") {
      for (const auto& r : t.rows)
        rows.push_back({path, r.at(static_cast<std::size_t>(t.column("name"))), tk,
                        r.at(static_cast<std::size_t>(t.column("leaves"))),
                        std::stod(r.at(static_cast<std::size_t>(t.column("bits_per_ipm")))), ""});
    } else if (action == "derive-tree") {
      double prev = std::numeric_limits<double>::infinity();
      for (const auto& r : t.rows) {
        const auto& b = r.at(static_cast<std::size_t>(t.column("bits_per_ipm")));
        if (b.empty()) continue;
        Row row{path, std::string("tree-") + (t.spec.value("multi_code", true) ? "multi" : "single"), tk,
                r.at(static_cast<std::size_t>(t.column("leaves"))), std::stod(b), ""};
        if (row.bits > prev + 1e-12) row.flag = "increase";
        prev = row.bits;
        rows.push_back(row);
      }
    } else if (action == "entropy") {
      const int cb = t.column("code_based");
      for (const auto& r : t.rows) {
        const auto& ctx = r.at(static_cast<std::size_t>(t.column("contexts")));
        rows.push_back({path, "entropy(" + ctx + ")", tk, "", std::stod(r.at(static_cast<std::size_t>(t.column("entropy")))), ""});
        if (cb >= 0)
          rows.push_back({path, "code-based(" + ctx + ")", tk, "", std::stod(r.at(static_cast<std::size_t>(cb))), ""});
      }
    } else if (action == "multipass") {
      for (const auto& r : t.rows)
        rows.push_back({path, "pass-" + r.at(0), tk, "", std::stod(r.at(static_cast<std::size_t>(t.column("new")))), ""});
    } else {
      throw ValidationError(path + ": cannot report on action '" + action + "'");
    }
  }
  if (rows.empty()) throw ValidationError("inputs contain no result rows");

  const double base = rows.front().bits;
  std::ostringstream csv;
  csv << "source,label,k,leaves,bits_per_ipm,delta,flag\n";
  for (const auto& r : rows)
    csv << r.source << "," << r.label << "," << r.k << "," << r.leaves << "," << fmt(r.bits) << ","
        << fmt(base > 0 ? (r.bits - base) / base : 0.0) << "," << r.flag << "\n";

  std::ostringstream human;
  human << std::left << std::setw(28) << "label" << std::setw(8) << "leaves" << std::setw(14) << "bits/IPM"
        << std::setw(10) << "delta" << "flag\n";
  for (const auto& r : rows) {
    std::ostringstream d;
    d << std::showpos << std::fixed << std::setprecision(2) << (base > 0 ? 100.0 * (r.bits - base) / base : 0.0) << "%";
    std::ostringstream b;
    b << std::fixed << std::setprecision(4) << r.bits;
    human << std::setw(28) << r.label << std::setw(8) << r.leaves << std::setw(14) << b.str() << std::setw(10)
          << d.str() << r.flag << "\n";
  }
  Common cc = c;
  cc.profile = "custom";
  cc.k = *k;
  const json spec = spec_of("report", cc, {{"inputs", inputs}});
  std::cout << human.str();
  if (!c.out.empty()) emit(cc, spec, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intra prediction mode signaling: statistics, code design and scheme search"};
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  SynthOpts synth_opts;
  add_common(synth, common);
  synth->add_option("--width", synth_opts.p.width)->capture_default_str();
  synth->add_option("--height", synth_opts.p.height)->capture_default_str();
  synth->add_option("--copy-prob", synth_opts.p.copy_prob)->capture_default_str();
  synth->add_option("--jitter-prob", synth_opts.p.jitter_prob)->capture_default_str();
  synth->add_option("--nonangular-prob", synth_opts.p.nonangular_prob)->capture_default_str();
  synth->add_option("--rd-alternates", synth_opts.p.rd_alternates)->capture_default_str();
  synth->add_option("--rd-gap-mean", synth_opts.p.rd_gap_mean)->capture_default_str();

  std::string in;
  auto* stats = app.add_subcommand("stats", "Dataset summary");
  add_common(stats, common);
  stats->add_option("--in", in, "Samples (CSV or binary)")->required();

  auto* ent = app.add_subcommand("entropy", "Conditional entropy per context set");
  add_common(ent, common);
  std::vector<std::string> ctx_sets;
  bool with_codes = false;
  ent->add_option("--in", in, "Samples (CSV or binary)")->required();
  ent->add_option("--contexts", ctx_sets, "Context sets, e.g. L,U (repeatable; 'none' for no context)")
      ->default_val(std::vector<std::string>{"L,U"});
  ent->add_flag("--code-based", with_codes, "Add the code-based entropy over the static code set");

  auto* codes = app.add_subcommand("codes", "Enumerate complete code shapes");
  add_common(codes, common);
  CodesOpts codes_opts;
  codes->add_option("--mpm", codes_opts.mpm, "MPM counts (repeatable)");
  codes->add_option("--max-len", codes_opts.max_len, "Longest codeword");
  codes->add_option("--groups", codes_opts.groups, "Most remainder groups");
  codes->add_option("--rule", codes_opts.rule, "any | not-longer | shorter");
  codes->add_flag("--dynamic", codes_opts.dynamic, "Start from the dynamic-list profile");

  auto* tree = app.add_subcommand("derive-tree", "Search decision trees with static leaves");
  add_common(tree, common);
  TreeOpts tree_opts;
  tree->add_option("--in", tree_opts.in, "Samples")->required();
  tree->add_option("--leaves", tree_opts.leaves, "Leaf budget N or range A..B")->capture_default_str();
  tree->add_option("--depth", tree_opts.depth)->capture_default_str();
  tree->add_flag("--multi-code,!--single-code", tree_opts.multi, "One code per leaf (default) or one shared code");
  tree->add_option("--method", tree_opts.method, "auto | exhaustive | genetic")->capture_default_str();
  tree->add_option("--iterations", tree_opts.iterations, "Genetic generations");
  tree->add_option("--population", tree_opts.population, "Genetic population");
  tree->add_option("--scheme-out", tree_opts.scheme_out, "Write the largest tree as JSON");

  auto* dyn = app.add_subcommand("derive-dynlist", "Search a tree with dynamic-list leaves");
  add_common(dyn, common);
  DynOpts dyn_opts;
  dyn->add_option("--in", dyn_opts.in, "Samples")->required();
  dyn->add_option("--leaves", dyn_opts.leaves)->capture_default_str();
  dyn->add_option("--iterations", dyn_opts.iterations, "Genetic generations per leaf");
  dyn->add_option("--population", dyn_opts.population, "Genetic population");
  dyn->add_option("--scheme-out", dyn_opts.scheme_out, "Write the scheme as JSON");

  auto* multi = app.add_subcommand("multipass", "Alternate RD reselection and rederivation");
  add_common(multi, common);
  multi->add_option("--in", dyn_opts.in, "Samples with RD candidates")->required();
  multi->add_option("--passes", dyn_opts.passes)->capture_default_str();
  multi->add_option("--lambda", dyn_opts.lambda, "Rate weight")->capture_default_str();
  multi->add_option("--initial", dyn_opts.initial, "Starting scheme (name or JSON path)")->capture_default_str();
  multi->add_option("--leaves", dyn_opts.leaves)->capture_default_str();
  multi->add_option("--iterations", dyn_opts.iterations, "Genetic generations per leaf");
  multi->add_option("--population", dyn_opts.population, "Genetic population");
  multi->add_option("--scheme-out", dyn_opts.scheme_out, "Write the final scheme as JSON");

  std::string scheme_name;
  const std::string scheme_help = "anchor-hevc | anchor-jem | fixture-five | fixture-four | path to JSON";
  auto* eval = app.add_subcommand("evaluate", "Exact cost of a scheme on a dataset");
  add_common(eval, common);
  eval->add_option("--in", in, "Samples")->required();
  eval->add_option("--scheme", scheme_name, scheme_help)->required();

  auto* enc = app.add_subcommand("encode", "Encode a dataset's modes");
  add_common(enc, common);
  enc->add_option("--in", in, "Samples")->required();
  enc->add_option("--scheme", scheme_name, scheme_help)->required();

  auto* dec = app.add_subcommand("decode", "Decode a blob given the contexts");
  add_common(dec, common);
  std::string blob_path;
  dec->add_option("--blob", blob_path)->required();
  dec->add_option("--contexts", in, "Samples file providing the contexts")->required();
  dec->add_option("--scheme", scheme_name, scheme_help)->required();

  auto* report = app.add_subcommand("report", "Merge result files into a comparison table");
  add_common(report, common);
  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "Result files written by this tool");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) run_synth(common, synth_opts);
    if (stats->parsed()) run_stats(common, in);
    if (ent->parsed()) run_entropy(common, in, ctx_sets, with_codes);
    if (codes->parsed()) run_codes(common, codes_opts);
    if (tree->parsed()) run_derive_tree(common, tree_opts);
    if (dyn->parsed()) run_derive_dynlist(common, dyn_opts);
    if (multi->parsed()) run_multipass(common, dyn_opts);
    if (eval->parsed()) run_evaluate(common, in, scheme_name);
    if (enc->parsed()) run_encode(common, in, scheme_name);
    if (dec->parsed()) run_decode(common, blob_path, in, scheme_name);
    if (report->parsed()) run_report(common, inputs);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
