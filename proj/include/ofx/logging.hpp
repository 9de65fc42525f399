/**
 * Copyright 2026 The ofx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Logging setup: stderr sink filtered by OFX_LOG (error, warn, info, debug)
// plus a sink that counts warnings and errors for the run summary.

#include <spdlog/sinks/base_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace ofx {

class CountingSink : public spdlog::sinks::base_sink<std::mutex> {
 public:
  std::size_t warnings() const { return warnings_; }
  std::size_t errors() const { return errors_; }

 protected:
  void sink_it_(const spdlog::details::log_msg& msg) override {
    if (msg.level == spdlog::level::warn) ++warnings_;
    if (msg.level >= spdlog::level::err && msg.level != spdlog::level::off) ++errors_;
  }
  void flush_() override {}

 private:
  std::atomic<std::size_t> warnings_{0};
  std::atomic<std::size_t> errors_{0};
};

inline spdlog::level::level_enum log_level_from_string(const std::string& s) {
  if (s == "error") return spdlog::level::err;
  if (s == "warn") return spdlog::level::warn;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  throw std::invalid_argument("OFX_LOG must be one of error, warn, info, debug; got " + s);
}

/// Installs the default logger and returns the warning counter. The level
/// comes from OFX_LOG (default info). Counting is independent of the level.
inline std::shared_ptr<CountingSink> configure_logging() {
  const char* env = std::getenv("OFX_LOG");
  const auto level = log_level_from_string(env && *env ? env : "info");
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(level);
  auto counter = std::make_shared<CountingSink>();
  counter->set_level(spdlog::level::warn);
  auto logger = std::make_shared<spdlog::logger>("ofx", spdlog::sinks_init_list{console, counter});
  logger->set_level(std::min(level, spdlog::level::warn));
  spdlog::set_default_logger(logger);
  return counter;
}

}  // namespace ofx
