#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

#include "nodetab/num/error.hpp"
#include "nodetab/sim/oracle.hpp"

namespace nodetab::sim {
namespace {

int parent_rows(const BnOracle& bn, const BnNode& node) {
  int r = 1;
  for (int p : node.parents) r *= bn.nodes[p].arity;
  return r;
}

// Row index for a joint parent state, first listed parent most significant.
int parent_row(const BnOracle& bn, const BnNode& node, const double* states) {
  int r = 0;
  for (int p : node.parents) {
    int s = static_cast<int>(states[p]);
    r = r * bn.nodes[p].arity + s;
  }
  return r;
}

}  // namespace

std::vector<int> BnOracle::topo_order() const {
  const int n = static_cast<int>(nodes.size());
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> children(n);
  for (int i = 0; i < n; ++i)
    for (int p : nodes[i].parents) {
      if (p < 0 || p >= n) fail(errc::schema, "parent index out of range");
      children[p].push_back(i);
      ++indeg[i];
    }
  std::vector<int> order, frontier;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) frontier.push_back(i);
  while (!frontier.empty()) {
    int v = frontier.back();
    frontier.pop_back();
    order.push_back(v);
    for (int c : children[v])
      if (--indeg[c] == 0) frontier.push_back(c);
  }
  if (static_cast<int>(order.size()) != n)
    fail(errc::schema, "network parent structure has a cycle");
  return order;
}

void BnOracle::validate() const {
  if (nodes.empty()) fail(errc::schema, "network has no nodes");
  std::set<std::string> names;
  for (const BnNode& node : nodes) {
    if (node.name.empty()) fail(errc::schema, "unnamed network node");
    if (!names.insert(node.name).second)
      fail(errc::schema, "duplicate node name: " + node.name);
    if (node.arity < 2) fail(errc::schema, "node " + node.name + " needs arity >= 2");
    if (static_cast<int>(node.categories.size()) != node.arity)
      fail(errc::schema, "node " + node.name + " category list does not match its arity");
    if (node.cpt.rows() != parent_rows(*this, node) || node.cpt.cols() != node.arity)
      fail(errc::schema, "node " + node.name + " CPT shape does not match parents and arity");
    for (int r = 0; r < node.cpt.rows(); ++r) {
      double s = 0;
      for (int c = 0; c < node.arity; ++c) {
        if (node.cpt(r, c) < 0) fail(errc::schema, "negative probability in node " + node.name);
        s += node.cpt(r, c);
      }
      if (std::fabs(s - 1.0) > 1e-9)
        fail(errc::schema, "CPT row of node " + node.name + " does not sum to 1");
    }
  }
  topo_order();
}

prep::TableSchema BnOracle::schema() const {
  prep::TableSchema s;
  for (const BnNode& node : nodes)
    s.columns.push_back({node.name, prep::ColumnKind::discrete, node.categories});
  return s;
}

BnOracle bn_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("nodes") || !j["nodes"].is_array())
    fail(errc::schema, "network file is not a JSON object with a nodes array");
  BnOracle bn;
  std::vector<std::vector<std::string>> parent_names;
  for (const auto& jn : j["nodes"]) {
    BnNode node;
    node.name = jn.value("name", "");
    node.arity = jn.value("arity", 0);
    if (jn.contains("categories"))
      node.categories = jn["categories"].get<std::vector<std::string>>();
    else
      for (int c = 0; c < node.arity; ++c) node.categories.push_back("s" + std::to_string(c));
    parent_names.push_back(jn.value("parents", std::vector<std::string>{}));
    if (!jn.contains("cpt") || !jn["cpt"].is_array())
      fail(errc::schema, "node " + node.name + " is missing its cpt");
    auto rows = jn["cpt"].get<std::vector<std::vector<double>>>();
    node.cpt = num::Matrix(static_cast<int>(rows.size()), node.arity > 0 ? node.arity : 1);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<int>(rows[r].size()) != node.arity)
        fail(errc::schema, "node " + node.name + " has a CPT row of the wrong width");
      for (int c = 0; c < node.arity; ++c) node.cpt.at(static_cast<int>(r), c) = rows[r][c];
    }
    bn.nodes.push_back(std::move(node));
  }
  for (size_t i = 0; i < bn.nodes.size(); ++i) {
    for (const std::string& pname : parent_names[i]) {
      int p = -1;
      for (size_t q = 0; q < bn.nodes.size(); ++q)
        if (bn.nodes[q].name == pname) p = static_cast<int>(q);
      if (p < 0)
        fail(errc::schema, "node " + bn.nodes[i].name + " lists unknown parent " + pname);
      bn.nodes[i].parents.push_back(p);
    }
  }
  bn.smoothed = j.value("smoothed", false);
  bn.validate();
  return bn;
}

std::string bn_to_json(const BnOracle& bn) {
  nlohmann::json out;
  nlohmann::json nodes = nlohmann::json::array();
  for (const BnNode& node : bn.nodes) {
    nlohmann::json jn;
    jn["name"] = node.name;
    jn["arity"] = node.arity;
    jn["categories"] = node.categories;
    std::vector<std::string> parents;
    for (int p : node.parents) parents.push_back(bn.nodes[p].name);
    jn["parents"] = parents;
    nlohmann::json cpt = nlohmann::json::array();
    for (int r = 0; r < node.cpt.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < node.arity; ++c) row.push_back(node.cpt(r, c));
      cpt.push_back(row);
    }
    jn["cpt"] = cpt;
    nodes.push_back(jn);
  }
  out["nodes"] = nodes;
  out["smoothed"] = bn.smoothed;
  return out.dump(2);
}

prep::Table bn_sample(const BnOracle& bn, int n, num::RngStream& rng) {
  bn.validate();
  if (n < 1) fail(errc::config, "sample count must be positive");
  std::vector<int> order = bn.topo_order();
  prep::Table t;
  t.schema = bn.schema();
  t.values = num::Matrix(n, static_cast<int>(bn.nodes.size()));
  std::vector<double> row(bn.nodes.size());
  for (int i = 0; i < n; ++i) {
    for (int v : order) {
      const BnNode& node = bn.nodes[v];
      int r = parent_row(bn, node, row.data());
      row[v] = rng.categorical(&node.cpt.data()[static_cast<size_t>(r) * node.arity], node.arity);
    }
    for (size_t v = 0; v < row.size(); ++v) t.values.at(i, static_cast<int>(v)) = row[v];
  }
  return t;
}

double bn_loglik(const BnOracle& bn, const prep::Table& t, int* zero_rows) {
  bn.validate();
  if (t.rows() == 0) fail(errc::config, "cannot score an empty table");
  if (t.values.cols() != static_cast<int>(bn.nodes.size()))
    fail(errc::schema, "table width does not match the network");
  for (size_t v = 0; v < bn.nodes.size(); ++v)
    if (t.schema.columns[v].name != bn.nodes[v].name)
      fail(errc::schema, "table columns are not the network's nodes in order");
  if (zero_rows) *zero_rows = 0;
  double total = 0;
  for (int i = 0; i < t.rows(); ++i) {
    const double* row = &t.values.data()[static_cast<size_t>(i) * t.values.cols()];
    double lp = 0;
    for (size_t v = 0; v < bn.nodes.size(); ++v) {
      const BnNode& node = bn.nodes[v];
      int s = static_cast<int>(row[v]);
      if (s < 0 || s >= node.arity)
        fail(errc::schema, "state out of range for node " + node.name);
      double p = node.cpt(parent_row(bn, node, row), s);
      if (p <= 0) {
        lp = -std::numeric_limits<double>::infinity();
        break;
      }
      lp += std::log(p);
    }
    if (std::isinf(lp) && zero_rows) ++*zero_rows;
    total += lp;
  }
  return total / t.rows();
}

BnOracle bn_fit(const BnOracle& tmpl, const prep::Table& t) {
  tmpl.validate();
  if (t.rows() == 0) fail(errc::config, "cannot fit a network to an empty table");
  if (t.values.cols() != static_cast<int>(tmpl.nodes.size()))
    fail(errc::schema, "table width does not match the network");
  BnOracle out = tmpl;
  std::vector<num::Matrix> counts;
  for (const BnNode& node : out.nodes)
    counts.push_back(num::Matrix::full(node.cpt.rows(), node.arity, 1.0));  // add-one
  for (int i = 0; i < t.rows(); ++i) {
    const double* row = &t.values.data()[static_cast<size_t>(i) * t.values.cols()];
    for (size_t v = 0; v < out.nodes.size(); ++v) {
      const BnNode& node = out.nodes[v];
      int s = static_cast<int>(row[v]);
      if (s < 0 || s >= node.arity)
        fail(errc::schema, "state out of range for node " + node.name);
      counts[v].at(parent_row(out, node, row), s) += 1.0;
    }
  }
  for (size_t v = 0; v < out.nodes.size(); ++v) {
    BnNode& node = out.nodes[v];
    for (int r = 0; r < node.cpt.rows(); ++r) {
      double s = 0;
      for (int c = 0; c < node.arity; ++c) s += counts[v](r, c);
      for (int c = 0; c < node.arity; ++c) node.cpt.at(r, c) = counts[v](r, c) / s;
    }
  }
  out.smoothed = true;
  return out;
}

}  // namespace nodetab::sim
