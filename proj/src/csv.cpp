#include "vsdm/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_header(std::ofstream& out, int d, const std::string& hash) {
  out << "# config_hash=" << hash << "\n";
  out << "n,t";
  for (int i = 0; i < d; ++i) out << ",x_" << i;
  out << ",chain\n";
}

void write_row(std::ofstream& out, long n, double t, const Eigen::VectorXd& x, long chain) {
  out << n << ',' << number(t);
  for (Eigen::Index i = 0; i < x.size(); ++i) out << ',' << number(x(i));
  out << ',' << chain << '\n';
}

int state_dim(const CsvTable& table) {
  int d = 0;
  while (table.column("x_" + std::to_string(d)) >= 0) ++d;
  if (d == 0 || table.column("n") < 0 || table.column("t") < 0 || table.column("chain") < 0)
    throw ParseError("expected columns n, t, x_0.., chain", 1);
  return d;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int number_of_line = 0;
  while (std::getline(in, line)) {
    ++number_of_line;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      constexpr std::string_view tag = "# config_hash=";
      if (t.rfind(tag, 0) == 0) table.config_hash = trim(t.substr(tag.size()));
      continue;
    }
    auto fields = split(t);
    if (table.header.empty()) {
      for (const auto& f : fields)
        if (f.empty()) throw ParseError("empty column name in header", number_of_line);
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       number_of_line);
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& f = fields[i];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), row[i]);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw ParseError("malformed number '" + f + "' in column " + table.header[i], number_of_line);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError("missing header row", number_of_line);
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

void write_samples_csv(const std::filesystem::path& path, const SampleBatch& batch,
                       const std::string& config_hash) {
  write_points_csv(path, batch.samples, config_hash);
}

void write_points_csv(const std::filesystem::path& path, const Eigen::MatrixXd& points,
                      const std::string& config_hash) {
  auto out = open_out(path);
  write_header(out, static_cast<int>(points.rows()), config_hash);
  for (Eigen::Index c = 0; c < points.cols(); ++c) write_row(out, 0, 0.0, points.col(c), c);
}

void write_trajectories_csv(const std::filesystem::path& path, const SampleBatch& batch,
                            const std::string& config_hash) {
  if (batch.states.empty()) throw DomainError("batch carries no trajectories");
  auto out = open_out(path);
  write_header(out, static_cast<int>(batch.samples.rows()), config_hash);
  const auto steps = static_cast<long>(batch.states.size()) - 1;
  for (Eigen::Index c = 0; c < batch.samples.cols(); ++c) {
    for (std::size_t k = 0; k < batch.states.size(); ++k) {
      write_row(out, steps - static_cast<long>(k), batch.times(static_cast<Eigen::Index>(k)),
                batch.states[k].col(c), c);
    }
  }
}

Eigen::MatrixXd points_from_csv(const CsvTable& table) {
  const int d = state_dim(table);
  const int x0 = table.column("x_0");
  Eigen::MatrixXd out(d, static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t j = 0; j < table.rows.size(); ++j)
    for (int i = 0; i < d; ++i) out(i, static_cast<Eigen::Index>(j)) = table.rows[j][x0 + i];
  return out;
}

TrajectorySet trajectories_from_csv(const CsvTable& table) {
  const int d = state_dim(table);
  const int cn = table.column("n"), ct = table.column("t"), cx = table.column("x_0"),
            cc = table.column("chain");
  // chain -> (n -> row)
  std::map<long, std::map<long, std::size_t, std::greater<>>> chains;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto chain = static_cast<long>(table.rows[r][cc]);
    const auto n = static_cast<long>(table.rows[r][cn]);
    if (!chains[chain].emplace(n, r).second)
      throw ParseError("duplicate (chain, n) entry", 0);
  }
  if (chains.empty()) throw ParseError("no trajectory rows", 0);
  const std::size_t length = chains.begin()->second.size();
  TrajectorySet set;
  set.states.assign(length, Eigen::MatrixXd(d, static_cast<Eigen::Index>(chains.size())));
  set.times.resize(static_cast<Eigen::Index>(length));
  Eigen::Index c = 0;
  for (const auto& [chain, rows] : chains) {
    if (rows.size() != length) throw ParseError("trajectories have different lengths", 0);
    std::size_t k = 0;
    for (const auto& [n, r] : rows) {
      const auto& row = table.rows[r];
      if (c == 0) set.times(static_cast<Eigen::Index>(k)) = row[ct];
      for (int i = 0; i < d; ++i) set.states[k](i, c) = row[cx + i];
      ++k;
    }
    ++c;
  }
  return set;
}

}  // namespace vsdm
