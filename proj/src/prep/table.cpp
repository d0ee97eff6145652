#include "nodetab/prep/table.hpp"

#include <nlohmann/json.hpp>
#include <set>

#include "nodetab/num/error.hpp"

namespace nodetab::prep {

void TableSchema::validate() const {
  if (columns.empty()) fail(errc::schema, "schema has no columns");
  std::set<std::string> names;
  for (const auto& c : columns) {
    if (c.name.empty()) fail(errc::schema, "unnamed column");
    if (!names.insert(c.name).second) fail(errc::schema, "duplicate column name: " + c.name);
    if (c.kind == ColumnKind::discrete) {
      if (c.categories.empty()) fail(errc::schema, "column " + c.name + " has no categories");
      std::set<std::string> cats(c.categories.begin(), c.categories.end());
      if (cats.size() != c.categories.size())
        fail(errc::schema, "column " + c.name + " has duplicate categories");
    } else if (!c.categories.empty()) {
      fail(errc::schema, "continuous column " + c.name + " lists categories");
    }
  }
}

int TableSchema::n_continuous() const {
  int n = 0;
  for (const auto& c : columns) n += c.kind == ColumnKind::continuous;
  return n;
}

int TableSchema::n_discrete() const {
  int n = 0;
  for (const auto& c : columns) n += c.kind == ColumnKind::discrete;
  return n;
}

int TableSchema::find(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string TableSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["kind"] = c.kind == ColumnKind::continuous ? "continuous" : "discrete";
    if (c.kind == ColumnKind::discrete) jc["categories"] = c.categories;
    cols.push_back(jc);
  }
  return nlohmann::json{{"columns", cols}}.dump(2);
}

TableSchema TableSchema::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("columns") || !j["columns"].is_array())
    fail(errc::schema, "schema file is not a JSON object with a columns array");
  TableSchema s;
  for (const auto& jc : j["columns"]) {
    ColumnSpec c;
    c.name = jc.value("name", "");
    std::string kind = jc.value("kind", "");
    if (kind == "continuous")
      c.kind = ColumnKind::continuous;
    else if (kind == "discrete")
      c.kind = ColumnKind::discrete;
    else
      fail(errc::schema, "column " + c.name + " has unknown kind '" + kind + "'");
    if (jc.contains("categories"))
      c.categories = jc["categories"].get<std::vector<std::string>>();
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

}  // namespace nodetab::prep
