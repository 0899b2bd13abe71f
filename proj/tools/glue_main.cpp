// glue: command-line front end for ingestion, model construction and estimation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "glue/catalog.hpp"
#include "glue/error.hpp"
#include "glue/glue_tree.hpp"
#include "glue/inference.hpp"
#include "glue/oracle.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace glue;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed JSON in '" + path + "': " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text << "\n";
}

void emit(const json& doc) { std::cout << doc.dump() << std::endl; }

std::shared_ptr<const DecompositionTree> open_model(const std::string& path) {
  return std::make_shared<const DecompositionTree>(load_tree(path));
}

// Reads <dir>/<table>.csv for every table of `schema`, keeping its dictionaries.
Database load_tables(Catalog schema, const std::string& dir) {
  Database db;
  db.catalog = std::move(schema);
  for (uint32_t t = 0; t < db.catalog.table_count(); ++t) {
    const std::string path = dir + "/" + db.catalog.tables[t].name + ".csv";
    std::ifstream csv(path);
    if (!csv) throw Error("missing table data: cannot open '" + path + "'");
    db.tables.push_back(ingest_table(db.catalog, db.catalog.tables[t].name, csv));
  }
  for (auto& table : db.tables) table.meta = db.catalog.tables[table.table];
  return db;
}

// "spn" or "T=exact,S=histogram"; a bare kind sets the default.
void apply_leaf_flag(const std::string& flag, TreeConfig& config) {
  std::stringstream items(flag);
  std::string item;
  while (std::getline(items, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      config.default_leaf = leaf_kind_from_string(item);
    } else {
      config.leaf_overrides[item.substr(0, eq)] = leaf_kind_from_string(item.substr(eq + 1));
    }
  }
}

size_t thread_count() {
  const char* env = std::getenv("GLUE_THREADS");
  if (env == nullptr) return std::max(1u, std::thread::hardware_concurrency());
  const long n = std::strtol(env, nullptr, 10);
  return n <= 0 ? 1 : static_cast<size_t>(n);
}

template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
  const size_t workers = std::min(thread_count(), std::max<size_t>(n, 1));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Options {
  std::string schema, data, out, catalog, model, query, workload;
  std::string mode = "context", stats = "exact", partitions = "adaptive", leaf;
  TreeConfig config;
  bool distinct = false, explain = false, oracle = false, apply = false;
  std::string generator = "random_pair";
  SyntheticSpec spec;
  uint64_t seed = 0;
  size_t count = 100;
  WorkloadOptions workload_options;
};

int run_ingest(const Options& o) {
  const auto db = load_database_dir(o.schema, o.data);
  write_text(o.out, database_to_json(db).dump());
  emit({{"tables", db.tables.size()}, {"validation", report_to_json(db.catalog, validate(db))}});
  return 0;
}

int run_build(Options o) {
  try {
    o.config.mode = estimation_mode_from_string(o.mode);
    o.config.stats = stats_mode_from_string(o.stats);
    o.config.partitions = partition_mode_from_string(o.partitions);
    if (!o.leaf.empty()) apply_leaf_flag(o.leaf, o.config);
    o.config.check();
  } catch (const Error& e) {
    throw CLI::ValidationError(e.what());
  }
  const auto db = std::make_shared<const Database>(database_from_json(read_json(o.catalog)));
  const auto start = std::chrono::steady_clock::now();
  const auto tree = build_tree(db, db->catalog.all_tables(), o.config);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  save_tree(tree, o.out);
  emit({{"nodes", tree.nodes.size()}, {"cost", tree.cost()}, {"build_ms", ms}});
  return 0;
}

int run_estimate(const Options& o) {
  const auto tree = open_model(o.model);
  const auto query = parse_query(read_json(o.query), tree->catalog());
  if (o.distinct) {
    const auto start = std::chrono::steady_clock::now();
    const double d = distinct_estimate(*tree, query, tree->config.mode);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    emit({{"distinct", d}, {"elapsed_ms", ms}});
    return 0;
  }
  const auto report = estimate(*tree, query, tree->config.mode, {nullptr, o.explain});
  if (o.explain) std::cerr << report.trace.dump() << std::endl;
  emit(estimate_to_json(report, tree->catalog()));
  return 0;
}

int run_bench(const Options& o) {
  const auto tree = open_model(o.model);
  const auto queries = workload_from_json(read_json(o.workload), tree->catalog());
  std::vector<double> estimates(queries.size()), truths(queries.size()), latency(queries.size());
  parallel_for(queries.size(), [&](size_t i) {
    const auto report = estimate(*tree, queries[i], tree->config.mode);
    estimates[i] = report.cardinality;
    latency[i] = report.elapsed_ms;
    if (o.oracle) truths[i] = static_cast<double>(exec_exact(*tree->db, queries[i], report.effective_tables));
  });
  json doc{{"queries", queries.size()}, {"estimates", estimates}};
  if (!latency.empty()) {
    double total = 0.0;
    for (double ms : latency) total += ms;
    doc["mean_ms"] = total / static_cast<double>(latency.size());
  }
  if (o.oracle) {
    std::vector<double> errors;
    for (size_t i = 0; i < queries.size(); ++i) errors.push_back(qerror(estimates[i], truths[i]));
    doc["truths"] = truths;
    doc["qerror"] = summary_to_json(QErrorSummary::summarize(errors));
  }
  if (!o.out.empty()) write_text(o.out, doc.dump());
  json line = doc;
  line.erase("estimates");
  line.erase("truths");
  emit(line);
  return 0;
}

int run_subplans(const Options& o) {
  const auto tree = open_model(o.model);
  const auto query = parse_query(read_json(o.query), tree->catalog());
  emit(subplans_to_json(estimate_subplans(*tree, query, tree->config.mode), tree->catalog()));
  return 0;
}

int run_inspect(const Options& o) {
  const auto tree = open_model(o.model);
  auto doc = tree_to_json(*tree);
  json rows = json::object();
  for (const auto& t : tree->catalog().tables) rows[t.name] = t.row_count;
  doc["database"] = {{"schema", schema_to_json(tree->catalog())}, {"rows", rows}};
  emit(doc);
  return 0;
}

int run_check_update(const Options& o) {
  const auto tree = open_model(o.model);
  const auto fresh = std::make_shared<const Database>(load_tables(tree->catalog(), o.data));
  const auto stale = check_update(*tree, *fresh, tree->config.tau);
  json doc{{"stale", stale_to_json(stale)}};
  if (o.apply) {
    save_tree(apply_update(*tree, fresh, tree->config.tau), o.out);
    doc["written"] = o.out;
  }
  emit(doc);
  return 0;
}

int run_generate(Options o) {
  try {
    o.spec.kind = generator_kind_from_string(o.generator);
    o.spec.check();
  } catch (const Error& e) {
    throw CLI::ValidationError(e.what());
  }
  const auto db = gen_synthetic(o.spec, o.seed);
  if (!o.data.empty()) {
    std::filesystem::create_directories(o.data);
    write_text(o.data + "/schema.json", schema_to_json(db.catalog).dump(2));
    for (const auto& t : db.tables) {
      std::ofstream csv(o.data + "/" + db.catalog.tables[t.table].name + ".csv");
      if (!csv) throw Error("cannot write table data under '" + o.data + "'");
      write_csv(db.catalog, t, csv);
    }
  }
  if (!o.out.empty()) write_text(o.out, database_to_json(db).dump());
  emit({{"tables", db.tables.size()}, {"spec", synthetic_spec_to_json(o.spec)}});
  return 0;
}

int run_workload(const Options& o) {
  const auto db = database_from_json(read_json(o.catalog));
  const auto queries = gen_workload(db, o.count, o.seed, o.workload_options);
  const auto doc = workload_to_json(queries, db.catalog);
  if (o.out.empty()) {
    emit(doc);
  } else {
    write_text(o.out, doc.dump(2));
    emit({{"queries", queries.size()}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Join cardinality estimation over decomposition trees"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Load a schema and CSV directory into a catalog file");
  ingest->add_option("--schema", o.schema)->required();
  ingest->add_option("--data", o.data)->required();
  ingest->add_option("--out", o.out)->required();

  auto* build = app.add_subcommand("build", "Construct and save a model");
  build->add_option("--catalog", o.catalog)->required();
  build->add_option("--out", o.out)->required();
  build->add_option("--mode", o.mode)->check(CLI::IsMember({"context", "independent"}));
  build->add_option("--tau", o.config.tau);
  build->add_option("--max-parts", o.config.max_parts);
  build->add_option("--min-rows", o.config.min_rows);
  build->add_option("--sample", o.config.sample_n);
  build->add_option("--stats", o.stats)->check(CLI::IsMember({"exact", "sampled"}));
  build->add_option("--partitions", o.partitions)->check(CLI::IsMember({"adaptive", "singleton"}));
  build->add_option("--alpha", o.config.cost.alpha);
  build->add_option("--beta", o.config.cost.beta);
  build->add_option("--gamma", o.config.cost.gamma);
  build->add_option("--leaf", o.leaf, "KIND or TABLE=KIND,...");
  build->add_option("--seed", o.config.seed);

  auto* est = app.add_subcommand("estimate", "Estimate one query");
  est->add_option("--model", o.model)->required();
  est->add_option("--query", o.query)->required();
  est->add_flag("--distinct", o.distinct);
  est->add_flag("--explain", o.explain, "Per-node trace on stderr");

  auto* bench = app.add_subcommand("bench", "Estimate a workload");
  bench->add_option("--model", o.model)->required();
  bench->add_option("--workload", o.workload)->required();
  bench->add_flag("--oracle", o.oracle, "Compare against exact counts");
  bench->add_option("--out", o.out);

  auto* subplans = app.add_subcommand("subplans", "Estimate every connected sub-plan of a query");
  subplans->add_option("--model", o.model)->required();
  subplans->add_option("--query", o.query)->required();

  auto* inspect = app.add_subcommand("inspect", "Dump a model");
  inspect->add_option("--model", o.model)->required();

  auto* update = app.add_subcommand("check-update", "List partitions made stale by new data");
  update->add_option("--model", o.model)->required();
  update->add_option("--data", o.data)->required();
  auto* apply = update->add_flag("--apply", o.apply, "Re-split stale parts");
  update->add_option("--out", o.out)->needs(apply);

  auto* generate = app.add_subcommand("generate", "Write a synthetic database");
  generate->add_option("--kind", o.generator);
  generate->add_option("--t-rows", o.spec.t_rows);
  generate->add_option("--s-rows", o.spec.s_rows);
  generate->add_option("--attributes", o.spec.attributes);
  generate->add_option("--domain", o.spec.domain);
  generate->add_option("--tables", o.spec.tables);
  generate->add_option("--seed", o.seed);
  generate->add_option("--data", o.data, "Directory for schema.json and CSVs");
  generate->add_option("--out", o.out, "Catalog file");

  auto* workload = app.add_subcommand("workload", "Write a random query workload");
  workload->add_option("--catalog", o.catalog)->required();
  workload->add_option("--count", o.count);
  workload->add_option("--seed", o.seed);
  workload->add_option("--min-predicates", o.workload_options.min_predicates);
  workload->add_option("--max-predicates", o.workload_options.max_predicates);
  workload->add_flag("--all-tables", o.workload_options.all_tables);
  workload->add_flag("--every-table", o.workload_options.predicate_on_every_table);
  workload->add_option("--out", o.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() == 0) return 0;
    std::cerr << app.help() << std::flush;
    return kUsageError;
  }

  try {
    if (*ingest) return run_ingest(o);
    if (*build) return run_build(o);
    if (*est) return run_estimate(o);
    if (*bench) return run_bench(o);
    if (*subplans) return run_subplans(o);
    if (*inspect) return run_inspect(o);
    if (*update) {
      if (o.apply && o.out.empty()) throw CLI::RequiredError("--out");
      return run_check_update(o);
    }
    if (*generate) return run_generate(o);
    if (*workload) return run_workload(o);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kDataError;
  }
  return kUsageError;
}
