#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "tagnn/error.hpp"
#include "tagnn/rng.hpp"

namespace tagnn {

enum class LogFormat { yoochoose, diginetica };

/// Maps a format tag from config/CLI; unknown tags are a configuration error.
LogFormat parse_log_format(const std::string& tag);

/// One click/view row from a raw log. `order_key` breaks timestamp ties
/// within a session (the view logs carry a per-session ordering column that
/// is finer than the date).
struct RawEvent {
  std::string session_id;
  int64_t timestamp_ms = 0;
  std::string item_id;
  int64_t order_key = 0;
};

struct ParseResult {
  std::vector<RawEvent> events;
  size_t total_rows = 0;    // non-empty data rows seen
  size_t skipped_rows = 0;  // rows dropped as malformed/unparseable

  // More than 1% skipped rows deserves a visible warning in the report.
  bool skip_warning() const { return total_rows > 0 && skipped_rows * 100 > total_rows; }
};

ParseResult parse_events(std::istream& source, LogFormat format);

/// Epoch milliseconds from "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS[.mmm]Z".
/// Returns false if the text does not match either form.
bool parse_timestamp_ms(const std::string& text, int64_t& out_ms);

/// Bijection between external item ids and dense internal indices [0, m).
struct Vocabulary {
  std::vector<std::string> external;              // index -> external id
  std::unordered_map<std::string, int> index_of;  // external id -> index

  int size() const { return static_cast<int>(external.size()); }
  int add(const std::string& ext);  // existing id returns its index
  /// Index for an id that must exist; unknown ids are an unknown-item error.
  int require(const std::string& ext) const;
};

struct Session {
  std::vector<int> items;  // internal indices, time order
  int64_t last_ts = 0;     // timestamp of the final event
};

struct Corpus {
  std::vector<Session> sessions;  // first-appearance order of session ids
  Vocabulary vocab;
};

/// Groups events by session, orders each session by (timestamp, order_key,
/// input order), drops items occurring fewer than five times overall, then
/// drops sessions left with fewer than two items, and numbers the surviving
/// items in first-encounter order.
Corpus build_and_filter(const std::vector<RawEvent>& events);

struct SplitResult {
  std::vector<Session> train;
  std::vector<Session> test;
  int64_t boundary_ms = 0;  // sessions ending strictly after this are test
};

/// Time-based split: the boundary sits `test_window_ms` before the newest
/// session end. Items never seen in train are removed from test sessions;
/// test sessions shorter than two items after that are dropped.
SplitResult split_by_time(const std::vector<Session>& sessions, int64_t test_window_ms);

/// Most recent `fraction` of sessions by end time, counted with a ceiling.
std::vector<Session> take_recent_fraction(std::vector<Session> sessions, double fraction);

struct TrainExample {
  std::vector<int> prefix;  // length >= 1
  int label = -1;
};

/// ([v1],v2), ([v1,v2],v3), ..., ([v1..v_{n-1}], v_n) — n-1 examples.
std::vector<TrainExample> expand_prefixes(const Session& session);
std::vector<TrainExample> expand_all(const std::vector<Session>& sessions);

/// Shuffled index batches over [0, n); the final partial batch is kept.
std::vector<std::vector<int>> make_batches(size_t n, int batch_size, Rng& rng);

// Prepared on-disk format: one `label<TAB>item,item,...` line per example
// and a companion `index<TAB>external_id` vocabulary file.
void write_examples(const std::string& path, const std::vector<TrainExample>& examples);
std::vector<TrainExample> read_examples(const std::string& path);
void write_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary read_vocab(const std::string& path);

}  // namespace tagnn
