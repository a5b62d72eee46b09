#include "ppocma/viz.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "detail/csv.hpp"
#include "detail/io.hpp"

namespace ppocma::viz {

namespace fs = std::filesystem;

namespace {

// panel geometry: content square of kPanel px maps [-kRange, kRange]^2
constexpr double kPanel = 200.0;
constexpr double kMargin = 28.0;
constexpr double kRange = 2.5;

struct PolicyRow {
  double mu0, mu1, sigma0, sigma1;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::string svg_num(double v) { return detail::format_double(std::round(v * 100.0) / 100.0); }

void draw_panel(std::string& svg, double ox, double oy, const std::string& label,
                const PolicyRow& policy, const std::vector<std::pair<double, double>>& actions) {
  const double s = panel_scale();
  const double cx = ox + kPanel / 2.0, cy = oy + kPanel / 2.0;
  const auto X = [&](double v) { return cx + v * s; };
  const auto Y = [&](double v) { return cy - v * s; };

  svg += "<rect x=\"" + svg_num(ox) + "\" y=\"" + svg_num(oy) + "\" width=\"" +
         svg_num(kPanel) + "\" height=\"" + svg_num(kPanel) +
         "\" fill=\"white\" stroke=\"#444\"/>\n";
  // action box [-1,1]^2
  svg += "<rect x=\"" + svg_num(X(-1.0)) + "\" y=\"" + svg_num(Y(1.0)) + "\" width=\"" +
         svg_num(2.0 * s) + "\" height=\"" + svg_num(2.0 * s) +
         "\" fill=\"none\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& [a0, a1] : actions)
    svg += "<circle cx=\"" + svg_num(X(a0)) + "\" cy=\"" + svg_num(Y(a1)) +
           "\" r=\"1.5\" fill=\"#3b6fd4\" fill-opacity=\"0.45\"/>\n";
  svg += "<ellipse cx=\"" + svg_num(X(policy.mu0)) + "\" cy=\"" + svg_num(Y(policy.mu1)) +
         "\" rx=\"" + detail::format_double(policy.sigma0 * s) + "\" ry=\"" +
         detail::format_double(policy.sigma1 * s) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  svg += "<circle cx=\"" + svg_num(X(policy.mu0)) + "\" cy=\"" + svg_num(Y(policy.mu1)) +
         "\" r=\"2.5\" fill=\"black\"/>\n";
  svg += "<text x=\"" + svg_num(ox + 6.0) + "\" y=\"" + svg_num(oy + 16.0) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" + label +
         "</text>\n";
}

std::string panels_svg(const std::map<long long, PolicyRow>& policy_rows,
                       const std::map<long long, std::vector<std::pair<double, double>>>& actions) {
  const int cols = 5;
  const int n = static_cast<int>(policy_rows.size());
  const int rows = (n + cols - 1) / cols;
  const double width = cols * (kPanel + kMargin) + kMargin;
  const double height = rows * (kPanel + kMargin) + kMargin;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    svg_num(width) + "\" height=\"" + svg_num(height) + "\">\n";
  int i = 0;
  static const std::vector<std::pair<double, double>> no_actions;
  for (const auto& [iteration, policy] : policy_rows) {
    const double ox = kMargin + (i % cols) * (kPanel + kMargin);
    const double oy = kMargin + (i / cols) * (kPanel + kMargin);
    const auto it = actions.find(iteration);
    draw_panel(svg, ox, oy, "iteration " + std::to_string(iteration), policy,
               it == actions.end() ? no_actions : it->second);
    ++i;
  }
  svg += "</svg>\n";
  return svg;
}

std::string trace_svg(const std::vector<std::vector<std::string>>& rows) {
  // rows: step,mu0,mu1,sigma0,sigma1,mu_norm,loss (header included)
  const double s = panel_scale();
  const double cx = kMargin + kPanel / 2.0, cy = kMargin + kPanel / 2.0;
  const auto X = [&](double v) { return cx + v * s; };
  const auto Y = [&](double v) { return cy - v * s; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    svg_num(kPanel + 2 * kMargin) + "\" height=\"" +
                    svg_num(kPanel + 2 * kMargin) + "\">\n";
  svg += "<rect x=\"" + svg_num(kMargin) + "\" y=\"" + svg_num(kMargin) + "\" width=\"" +
         svg_num(kPanel) + "\" height=\"" + svg_num(kPanel) +
         "\" fill=\"white\" stroke=\"#444\"/>\n";
  std::string points;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double mu0 = detail::parse_double(rows[i][1]);
    const double mu1 = detail::parse_double(rows[i][2]);
    points += svg_num(X(mu0)) + "," + svg_num(Y(mu1)) + " ";
  }
  svg += "<polyline points=\"" + points +
         "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.2\"/>\n";
  // start and end exploration ellipses
  for (std::size_t i : {std::size_t(1), rows.size() - 1}) {
    if (i >= rows.size()) break;
    const double mu0 = detail::parse_double(rows[i][1]);
    const double mu1 = detail::parse_double(rows[i][2]);
    const double s0 = detail::parse_double(rows[i][3]);
    const double s1 = detail::parse_double(rows[i][4]);
    svg += "<ellipse cx=\"" + svg_num(X(mu0)) + "\" cy=\"" + svg_num(Y(mu1)) + "\" rx=\"" +
           detail::format_double(s0 * s) + "\" ry=\"" + detail::format_double(s1 * s) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

double panel_scale() { return (kPanel / 2.0) / kRange; }

VizArtifacts emit_didactic_viz(const fs::path& run_dir) {
  const fs::path summary_path = run_dir / "summary.json";
  if (!fs::exists(summary_path))
    throw std::invalid_argument("viz: no summary.json under " + run_dir.string());
  const auto summary = nlohmann::json::parse(detail::read_file(summary_path.string()));
  if (summary.at("env").get<std::string>() != "quadratic")
    throw std::invalid_argument("viz: didactic visualization needs a quadratic-environment run");

  const fs::path viz_dir = run_dir / "viz";
  fs::create_directories(viz_dir);

  const std::string policy_text =
      detail::read_file((run_dir / "policy_by_iteration.csv").string());
  const std::string actions_text = detail::read_file((run_dir / "actions.csv").string());

  std::map<long long, PolicyRow> policy_rows;
  for (const auto& row : parse_csv(policy_text)) {
    if (row[0] == "iteration") continue;  // header
    policy_rows[std::stoll(row[0])] =
        PolicyRow{detail::parse_double(row[1]), detail::parse_double(row[2]),
                  detail::parse_double(row[3]), detail::parse_double(row[4])};
  }
  std::map<long long, std::vector<std::pair<double, double>>> actions;
  for (const auto& row : parse_csv(actions_text)) {
    if (row[0] == "iteration") continue;
    actions[std::stoll(row[0])].emplace_back(detail::parse_double(row[2]),
                                             detail::parse_double(row[3]));
  }

  VizArtifacts out;
  out.actions_csv = viz_dir / "actions_by_iteration.csv";
  detail::atomic_write(out.actions_csv.string(), actions_text);
  out.panels_svg = viz_dir / "panels.svg";
  detail::atomic_write(out.panels_svg.string(), panels_svg(policy_rows, actions));

  const fs::path trace_src = run_dir / "minibatch_trace.csv";
  if (fs::exists(trace_src)) {
    const std::string trace_text = detail::read_file(trace_src.string());
    out.trace_csv = viz_dir / "minibatch_trace.csv";
    detail::atomic_write(out.trace_csv->string(), trace_text);
    out.trace_svg = viz_dir / "minibatch_trace.svg";
    detail::atomic_write(out.trace_svg->string(), trace_svg(parse_csv(trace_text)));
  }
  return out;
}

}  // namespace ppocma::viz
