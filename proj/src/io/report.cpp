#include "mpa/io/report.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mpa/error.hpp"
#include "mpa/io/keyvalue.hpp"

namespace mpa::io {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string format_score_report(const score::ScoreReport& r, const text::Vocabulary* vocab) {
  json j;
  j["id"] = r.utterance_id;
  j["level"] = text::to_string(r.level);
  j["mode"] = score::to_string(r.mode);
  j["mean_log_likelihood"] = opt(r.mean_log_likelihood);
  json tokens = json::array();
  for (const auto& t : r.tokens) {
    json o;
    o["position"] = t.position;
    o["token_id"] = t.token;
    if (vocab) o["token"] = vocab->token(t.token);
    o["log_likelihood"] = opt(t.log_likelihood);
    o["scaled_score"] = t.scaled_score;
    if (t.predicted) {
      o["predicted_id"] = *t.predicted;
      if (vocab) o["predicted"] = vocab->token(*t.predicted);
    } else {
      o["predicted_id"] = nullptr;
    }
    tokens.push_back(std::move(o));
  }
  j["tokens"] = std::move(tokens);
  return j.dump();
}

score::ScoreReport parse_score_report(std::string_view line, std::string_view origin) {
  auto fail = [&](const std::string& what) -> score::ScoreReport {
    throw FormatError(std::string(origin) + ": " + what);
  };
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return fail("not a JSON object");
  try {
    score::ScoreReport r;
    r.utterance_id = j.at("id").get<std::string>();
    r.level = text::parse_level(j.at("level").get<std::string>());
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "unsup") {
      r.mode = score::Mode::Unsupervised;
    } else if (mode == "sup") {
      r.mode = score::Mode::Supervised;
    } else {
      return fail("unknown mode '" + mode + "'");
    }
    if (j.contains("mean_log_likelihood") && !j["mean_log_likelihood"].is_null()) {
      r.mean_log_likelihood = j["mean_log_likelihood"].get<double>();
    }
    for (const auto& o : j.at("tokens")) {
      score::TokenScore t;
      t.position = o.at("position").get<std::size_t>();
      t.token = o.at("token_id").get<int>();
      t.scaled_score = o.at("scaled_score").get<double>();
      if (o.contains("log_likelihood") && !o["log_likelihood"].is_null()) {
        t.log_likelihood = o["log_likelihood"].get<double>();
      }
      if (o.contains("predicted_id") && !o["predicted_id"].is_null()) {
        t.predicted = o["predicted_id"].get<int>();
      }
      r.tokens.push_back(t);
    }
    return r;
  } catch (const json::exception& e) {
    return fail(e.what());
  } catch (const InvalidInput& e) {
    return fail(e.what());
  }
}

std::string format_log_record(const train::LogRecord& rec) {
  json j;
  j["step"] = rec.step;
  j["epoch"] = rec.epoch;
  j["loss"] = rec.loss;
  j["lr"] = rec.lr;
  j["wall_ms"] = rec.wall_ms;
  return j.dump();
}

std::string format_metric(const MetricRecord& m) {
  json j;
  j["metric"] = m.metric;
  j["value"] = opt(m.value);
  j["n"] = m.n;
  if (m.buckets) {
    json arr = json::array();
    for (const auto& b : *m.buckets) {
      arr.push_back({{"bucket", b.bucket.name},
                     {"lo", b.bucket.lo},
                     {"hi", b.bucket.hi},
                     {"n", b.n},
                     {"accuracy", opt(b.accuracy)}});
    }
    j["buckets"] = std::move(arr);
  }
  if (m.warning) j["warning"] = *m.warning;
  return j.dump();
}

std::string format_decode_record(const DecodeRecord& d) {
  json j;
  j["id"] = d.id;
  j["hypothesis"] = d.hypothesis;
  j["reference"] = d.reference;
  j["steps"] = d.steps;
  j["committed"] = d.committed;
  j["token_accuracy"] = d.token_accuracy;
  j["wer"] = d.wer;
  return j.dump();
}

std::string attention_csv(const nn::Tensor& weights, const std::vector<std::string>& row_labels) {
  if (weights.rank() != 2) throw InvalidInput("attention map must be 2-D");
  if (row_labels.size() != weights.rows()) throw InvalidInput("one label per attention row required");
  std::string out = "token";
  for (std::size_t c = 0; c < weights.cols(); ++c) out += ",frame_" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    // Tokens are whitespace-free, but a comma would break the row.
    if (row_labels[r].find_first_of(",\"\n") != std::string::npos) {
      out += '"';
      for (char ch : row_labels[r]) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    } else {
      out += row_labels[r];
    }
    for (float v : weights.row(r)) out += "," + format_float(v);
    out += '\n';
  }
  return out;
}

std::string attention_pgm(const nn::Tensor& weights) {
  if (weights.rank() != 2) throw InvalidInput("attention map must be 2-D");
  std::string out = "P5\n" + std::to_string(weights.cols()) + " " + std::to_string(weights.rows()) +
                    "\n255\n";
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    const auto row = weights.row(r);
    const float peak = row.empty() ? 0.0f : *std::max_element(row.begin(), row.end());
    for (float v : row) {
      const double scaled = peak > 0.0f ? 255.0 * v / peak : 0.0;
      out += static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(scaled, 0.0, 255.0))));
    }
  }
  return out;
}

}  // namespace mpa::io
