#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "opacity/policy.hpp"

namespace opacity {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& token, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ParseError(source, line, "expected a number, got '" + token + "'");
  return v;
}

std::string row_state_label(const PolicyParams& theta, const MaskMdp& mdp, std::size_t row) {
  return theta.mode() == Conditioning::augmented ? mdp.state_labels()[mdp.state_of(row)] : mdp.state_labels()[row];
}

std::string row_config_label(const PolicyParams& theta, const MaskMdp& mdp, std::size_t row) {
  return theta.mode() == Conditioning::augmented ? mdp.action_labels()[mdp.config_of(row)] : "*";
}

}  // namespace

void write_policy(std::ostream& out, const PolicyParams& theta, const MaskMdp& mdp) {
  if (theta.num_states() != mdp.num_states() || theta.num_actions() != mdp.num_actions()) {
    throw ShapeMismatch("policy shape does not match the model");
  }
  const std::size_t K = theta.num_actions();
  out << "# dynamic mask policy\n";
  out << "mode " << to_string(theta.mode()) << "\n";
  out << "actions";
  for (const auto& a : mdp.action_labels()) out << ' ' << a;
  out << "\nrows " << theta.rows() << "\n";
  for (std::size_t row = 0; row < theta.rows(); ++row) {
    // A representative augmented state for the row gives the probabilities.
    const std::size_t z = theta.mode() == Conditioning::augmented ? row : row * K;
    const Vector pi = action_distribution(theta, z);
    out << "row " << row_state_label(theta, mdp, row) << ' ' << row_config_label(theta, mdp, row) << " theta";
    for (std::size_t a = 0; a < K; ++a) out << ' ' << shortest(theta(row, a));
    out << " probs";
    for (std::size_t a = 0; a < K; ++a) out << ' ' << shortest(pi(a));
    out << '\n';
  }
}

PolicyParams read_policy(std::istream& in, const MaskMdp& mdp, const std::string& source) {
  std::string text;
  std::size_t line_no = 0;
  bool have_mode = false;
  bool have_actions = false;
  Conditioning mode = Conditioning::augmented;
  PolicyParams theta;
  std::size_t expected_rows = 0;
  std::size_t next_row = 0;
  const std::size_t K = mdp.num_actions();

  while (std::getline(in, text)) {
    ++line_no;
    std::istringstream ls(text);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    if (key == "mode") {
      std::string name;
      ls >> name;
      try {
        mode = conditioning_from_string(name);
      } catch (const Error& e) {
        throw ParseError(source, line_no, e.what());
      }
      theta = PolicyParams(mdp.num_states(), K, mode);
      have_mode = true;
    } else if (key == "actions") {
      std::vector<std::string> labels;
      for (std::string a; ls >> a;) labels.push_back(a);
      if (labels != mdp.action_labels()) throw ShapeMismatch(source + ": mask actions do not match the model");
      have_actions = true;
    } else if (key == "rows") {
      if (!have_mode) throw ParseError(source, line_no, "'rows' before 'mode'");
      if (!(ls >> expected_rows)) throw ParseError(source, line_no, "row count missing");
      if (expected_rows != theta.rows()) {
        throw ShapeMismatch(source + ": policy has " + std::to_string(expected_rows) + " rows, model needs " +
                            std::to_string(theta.rows()));
      }
    } else if (key == "row") {
      if (!have_mode || !have_actions) throw ParseError(source, line_no, "'row' before header");
      if (next_row >= theta.rows()) throw ShapeMismatch(source + ": too many policy rows");
      std::string state, config, tag;
      ls >> state >> config >> tag;
      if (tag != "theta") throw ParseError(source, line_no, "expected 'theta'");
      if (state != row_state_label(theta, mdp, next_row) || config != row_config_label(theta, mdp, next_row)) {
        throw ShapeMismatch(source + ":" + std::to_string(line_no) + ": row labels (" + state + "," + config +
                            ") do not match the model");
      }
      for (std::size_t a = 0; a < K; ++a) {
        std::string tok;
        if (!(ls >> tok)) throw ParseError(source, line_no, "theta row too short");
        theta(next_row, a) = parse_double(tok, source, line_no);
      }
      if (!(ls >> tag) || tag != "probs") throw ParseError(source, line_no, "expected 'probs'");
      ++next_row;
    } else {
      throw ParseError(source, line_no, "unknown key '" + key + "'");
    }
  }
  if (!have_mode) throw ParseError(source, line_no, "missing 'mode' line");
  if (next_row != theta.rows()) {
    throw ShapeMismatch(source + ": policy has " + std::to_string(next_row) + " rows, model needs " +
                        std::to_string(theta.rows()));
  }
  if (!theta.all_finite()) throw ParseError(source, line_no, "non-finite parameter");
  return theta;
}

}  // namespace opacity
