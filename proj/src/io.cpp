#include "bmfal/io.hpp"

#include <fstream>
#include <sstream>

namespace bmfal {

namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());  // column-major
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ContractError("checkpoint: tensor payload does not match its shape header");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json model_to_json(const MfModel& model) {
  const ModelConfig& c = model.config();
  Json j;
  j["config"] = {
      {"num_fidelities", c.num_fidelities},
      {"input_dim", c.input_dim},
      {"latent_dims", c.latent_dims},
      {"output_dims", c.output_dims},
      {"hidden_width", c.hidden_width},
      {"hidden_layers", c.hidden_layers},
      {"activation", c.activation == Activation::kTanh ? "tanh" : "identity"},
      {"cov_type", c.cov_type == CovType::kFull ? "full" : "diag"},
  };
  j["domain"] = {{"lower", to_std(model.domain().lower)}, {"upper", to_std(model.domain().upper)}};
  j["train_invocations"] = model.train_invocations();
  Json params = Json::array();
  for (const auto& ref : model.tensors()) {
    Json p = matrix_to_json(*ref.tensor);
    p["name"] = ref.name;
    params.push_back(std::move(p));
  }
  j["params"] = std::move(params);
  return j;
}

MfModel model_from_json(const Json& j) {
  const Json& jc = j.at("config");
  ModelConfig c;
  c.num_fidelities = jc.at("num_fidelities").get<int>();
  c.input_dim = jc.at("input_dim").get<int>();
  c.latent_dims = jc.at("latent_dims").get<std::vector<int>>();
  c.output_dims = jc.at("output_dims").get<std::vector<int>>();
  c.hidden_width = jc.at("hidden_width").get<int>();
  c.hidden_layers = jc.at("hidden_layers").get<int>();
  c.activation = jc.at("activation").get<std::string>() == "identity" ? Activation::kIdentity
                                                                      : Activation::kTanh;
  c.cov_type = jc.at("cov_type").get<std::string>() == "diag" ? CovType::kDiag : CovType::kFull;
  DomainBox domain(from_std(j.at("domain").at("lower").get<std::vector<double>>()),
                   from_std(j.at("domain").at("upper").get<std::vector<double>>()));

  MfModel model(c, domain, 0);
  auto refs = model.tensors();
  const Json& params = j.at("params");
  if (params.size() != refs.size())
    throw ContractError("checkpoint: parameter count does not match the configuration");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Json& p = params[i];
    if (p.at("name").get<std::string>() != refs[i].name)
      throw ContractError("checkpoint: unexpected tensor name " + p.at("name").get<std::string>());
    Eigen::MatrixXd m = matrix_from_json(p);
    if (m.rows() != refs[i].tensor->rows() || m.cols() != refs[i].tensor->cols())
      throw ContractError("checkpoint: tensor shape mismatch for " + refs[i].name);
    *refs[i].tensor = std::move(m);
  }
  model.set_train_invocations(j.value("train_invocations", std::uint64_t{0}));
  return model;
}

void save_model(const MfModel& model, const std::string& path) {
  write_text_file(path, model_to_json(model).dump());
}

MfModel load_model(const std::string& path) {
  return model_from_json(Json::parse(read_text_file(path)));
}

void write_dataset_jsonl(const Dataset& data, const std::string& path) {
  std::ostringstream out;
  for (const auto& e : data.examples) {
    Json j;
    j["x"] = to_std(e.x);
    j["fidelity"] = e.fidelity + 1;  // 1-based on disk
    j["y"] = to_std(e.y);
    j["cost"] = e.cost;
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

Dataset read_dataset_jsonl(const std::string& path) {
  Dataset data;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    Example e;
    e.x = from_std(j.at("x").get<std::vector<double>>());
    e.fidelity = j.at("fidelity").get<int>() - 1;
    e.y = from_std(j.at("y").get<std::vector<double>>());
    e.cost = j.at("cost").get<double>();
    data.add(std::move(e));
  }
  return data;
}

Json plan_to_json(const Plan& plan) {
  Json j;
  Json queries = Json::array();
  for (std::size_t i = 0; i < plan.queries.size(); ++i) {
    queries.push_back({{"x", to_std(plan.queries[i].x)},
                       {"fidelity", plan.queries[i].fidelity + 1},
                       {"cost", plan.costs[i]},
                       {"score", plan.scores[i]}});
  }
  j["queries"] = std::move(queries);
  j["total_cost"] = plan.total_cost.to_double();
  j["total_cost_exact"] = plan.total_cost.str();
  j["infeasible"] = plan.infeasible;
  return j;
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["problem"] = c.problem;
  std::vector<int> mesh_sizes;
  for (const auto& m : c.ladder.meshes) mesh_sizes.push_back(m.n);
  j["ladder"] = {{"mesh_sizes", mesh_sizes},
                 {"lambdas", c.ladder.lambdas},
                 {"eval_mesh", c.ladder.eval_mesh.n}};
  j["synthetic"] = {{"discrepancy", c.synthetic_discrepancy}, {"input_dim", c.synthetic_input_dim}};
  j["model"] = {{"latent_dims", c.model.latent_dims},
                {"hidden_width", c.model.hidden_width},
                {"hidden_layers", c.model.hidden_layers},
                {"cov_type", c.model.cov_type}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"elbo_mc_samples", c.train.elbo_mc_samples},
                {"prior_var", c.train.prior_var},
                {"seed", c.train.seed}};
  j["budget"] = c.budget;
  j["num_batches"] = c.num_batches;
  j["initial_counts"] = c.initial_counts;
  j["mc_samples"] = c.mc_samples;
  j["optimizer"] = {{"restarts", c.optimizer.restarts},
                    {"max_iters", c.optimizer.max_iters},
                    {"grad_step", c.optimizer.grad_step},
                    {"tol", c.optimizer.tol},
                    {"seed", c.optimizer.seed}};
  j["test_size"] = c.test_size;
  j["test_seed"] = c.test_seed;
  j["strategy"] = strategy_to_string(c.strategy);
  j["seed"] = c.seed;
  j["inner_epochs"] = c.inner_epochs;
  j["record_walltime"] = c.record_walltime;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  c.problem = j.value("problem", c.problem);
  if (j.contains("ladder")) {
    const Json& l = j.at("ladder");
    c.ladder.meshes.clear();
    for (int n : l.at("mesh_sizes").get<std::vector<int>>()) c.ladder.meshes.push_back(MeshSpec(n));
    c.ladder.lambdas = l.at("lambdas").get<std::vector<double>>();
    c.ladder.eval_mesh = MeshSpec(l.at("eval_mesh").get<int>());
  }
  if (j.contains("synthetic")) {
    c.synthetic_discrepancy = j.at("synthetic").value("discrepancy", c.synthetic_discrepancy);
    c.synthetic_input_dim = j.at("synthetic").value("input_dim", c.synthetic_input_dim);
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    c.model.latent_dims = m.value("latent_dims", c.model.latent_dims);
    c.model.hidden_width = m.value("hidden_width", c.model.hidden_width);
    c.model.hidden_layers = m.value("hidden_layers", c.model.hidden_layers);
    c.model.cov_type = m.value("cov_type", c.model.cov_type);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.elbo_mc_samples = t.value("elbo_mc_samples", c.train.elbo_mc_samples);
    c.train.prior_var = t.value("prior_var", c.train.prior_var);
    c.train.seed = t.value("seed", c.train.seed);
  }
  c.budget = j.value("budget", c.budget);
  c.num_batches = j.value("num_batches", c.num_batches);
  c.initial_counts = j.value("initial_counts", c.initial_counts);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  if (j.contains("optimizer")) {
    const Json& o = j.at("optimizer");
    c.optimizer.restarts = o.value("restarts", c.optimizer.restarts);
    c.optimizer.max_iters = o.value("max_iters", c.optimizer.max_iters);
    c.optimizer.grad_step = o.value("grad_step", c.optimizer.grad_step);
    c.optimizer.tol = o.value("tol", c.optimizer.tol);
    c.optimizer.seed = o.value("seed", c.optimizer.seed);
  }
  c.test_size = j.value("test_size", c.test_size);
  c.test_seed = j.value("test_seed", c.test_seed);
  if (j.contains("strategy")) c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.inner_epochs = j.value("inner_epochs", c.inner_epochs);
  c.record_walltime = j.value("record_walltime", c.record_walltime);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(Json::parse(read_text_file(path)));
}

Json record_to_json(const RunRecord& r, bool record_walltime) {
  Json j;
  j["strategy"] = strategy_to_string(r.strategy);
  j["seed"] = r.seed;
  j["batch_index"] = r.batch_index;
  j["accumulated_cost"] = r.accumulated_cost.to_double();
  j["accumulated_cost_exact"] = r.accumulated_cost.str();
  j["nrmse"] = r.nrmse;
  j["wall_seconds"] = record_walltime ? r.wall_seconds : 0.0;
  j["batch_counts"] = r.batch_counts;
  return j;
}

}  // namespace bmfal
