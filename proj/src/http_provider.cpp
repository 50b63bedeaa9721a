#include <cmath>
#include <regex>

#include "httplib.h"
#include "json.hpp"

#include "cforge/error.hpp"
#include "cforge/sentence.hpp"

namespace cforge {

HttpProvider::HttpProvider(std::string url, int batch, double timeout_seconds) : batch_(batch), timeout_(timeout_seconds) {
  static const std::regex pattern(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw ValidationError("embedding provider url must look like http://host[:port][/path]: " + url);
  host_ = m[1].str();
  if (m[2].matched) port_ = std::stoi(m[2].str());
  prefix_ = m[3].matched ? m[3].str() : "";
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (batch_ < 1) throw ValidationError("embedding batch size must be positive");
}

std::string HttpProvider::id() const {
  return model_id_.empty() ? "http://" + host_ + ":" + std::to_string(port_) + prefix_ : model_id_;
}

std::vector<EmbeddingVector> HttpProvider::embed(const std::vector<std::string>& texts, const std::string& language) {
  std::vector<EmbeddingVector> out;
  httplib::Client client(host_, port_);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  int dim = -1;
  for (std::size_t from = 0; from < texts.size(); from += static_cast<std::size_t>(batch_)) {
    const std::size_t to = std::min(texts.size(), from + static_cast<std::size_t>(batch_));
    nlohmann::json body{{"texts", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(from),
                                                           texts.begin() + static_cast<std::ptrdiff_t>(to))},
                        {"language", language}};
    auto res = client.Post(prefix_ + "/embed", body.dump(), "application/json");
    if (!res) throw StageError("embedding provider " + id() + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw StageError("embedding provider " + id() + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    const auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("vectors") || !doc["vectors"].is_array())
      throw StageError("embedding provider " + id() + " sent a malformed response");
    const auto& vectors = doc["vectors"];
    if (vectors.size() != to - from)
      throw StageError("embedding provider " + id() + " returned " + std::to_string(vectors.size()) + " vectors for " +
                       std::to_string(to - from) + " texts");
    if (doc.contains("model_id") && doc["model_id"].is_string()) model_id_ = doc["model_id"].get<std::string>();
    const int declared = doc.value("dim", -1);
    for (const auto& v : vectors) {
      if (!v.is_array() || v.empty()) throw StageError("embedding provider " + id() + " sent an empty vector");
      EmbeddingVector e;
      e.provider_id = id();
      double n2 = 0;
      for (const auto& x : v) {
        if (!x.is_number()) throw StageError("embedding provider " + id() + " sent a non-numeric component");
        e.components.push_back(x.get<double>());
        n2 += e.components.back() * e.components.back();
      }
      if (dim < 0) dim = e.dim();
      if (e.dim() != dim || (declared > 0 && e.dim() != declared))
        throw StageError("embedding provider " + id() + " changed dimension within a request");
      const double n = std::sqrt(n2);
      if (std::abs(n - 1.0) > 1e-5)
        throw StageError("embedding provider " + id() + " sent a vector with norm " + std::to_string(n));
      for (double& x : e.components) x /= n;
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace cforge
