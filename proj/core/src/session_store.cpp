#include "outpaint/session_store.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>
#include <sqlite3.h>

#include "outpaint/errors.hpp"
#include "outpaint/util.hpp"

namespace outpaint {
namespace {

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &statement_, nullptr) != SQLITE_OK)
      throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(statement_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& text(int index, const std::string& value) {
    check(sqlite3_bind_text(statement_, index, value.data(), static_cast<int>(value.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& blob(int index, const std::string& value) {
    check(sqlite3_bind_blob(statement_, index, value.data(), static_cast<int>(value.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& integer(int index, std::int64_t value) {
    check(sqlite3_bind_int64(statement_, index, value));
    return *this;
  }
  Statement& real(int index, double value) {
    check(sqlite3_bind_double(statement_, index, value));
    return *this;
  }

  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(statement_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw std::runtime_error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  std::string column_text(int index) const {
    const auto* data = sqlite3_column_text(statement_, index);
    return data ? std::string(reinterpret_cast<const char*>(data),
                              static_cast<std::size_t>(sqlite3_column_bytes(statement_, index)))
                : std::string();
  }
  std::string column_blob(int index) const {
    const auto* data = sqlite3_column_blob(statement_, index);
    return data ? std::string(static_cast<const char*>(data),
                              static_cast<std::size_t>(sqlite3_column_bytes(statement_, index)))
                : std::string();
  }
  std::int64_t column_int(int index) const { return sqlite3_column_int64(statement_, index); }
  double column_real(int index) const { return sqlite3_column_double(statement_, index); }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw std::runtime_error(std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* statement_ = nullptr;
};

nlohmann::json optional_png(const std::string& png) {
  return png.empty() ? nlohmann::json(nullptr) : nlohmann::json(base64_encode(png));
}

}  // namespace

nlohmann::json EditSession::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : history) {
    entries.push_back({{"layout_png", base64_encode(entry.layout_png)},
                       {"image_png", base64_encode(entry.image_png)},
                       {"image_hash", entry.image_hash},
                       {"created_at", entry.created_at}});
  }
  const auto& latest_png = history.empty() ? initial_image_png : history.back().image_png;
  const auto& latest_hash = history.empty() ? initial_image_hash : history.back().image_hash;
  return {{"session_id", id},
          {"model_fingerprint", model_fingerprint},
          {"dataset", dataset},
          {"extension_fraction", extension_fraction},
          {"input_png", base64_encode(input_png)},
          {"input_layout_png", optional_png(input_layout_png)},
          {"layout_png", base64_encode(current_layout_png)},
          {"image_png", base64_encode(latest_png)},
          {"image_hash", latest_hash},
          {"initial_image_hash", initial_image_hash},
          {"history", entries},
          {"history_length", history.size()},
          {"created_at", created_at},
          {"updated_at", updated_at}};
}

SessionStore::SessionStore(const std::string& database) {
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(database.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
    std::string message = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw std::runtime_error("cannot open session store " + database + ": " + message);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA foreign_keys = ON");
  exec(R"(CREATE TABLE IF NOT EXISTS sessions (
            id TEXT PRIMARY KEY,
            model_fingerprint TEXT NOT NULL,
            dataset TEXT NOT NULL,
            extension_fraction REAL NOT NULL,
            input_png BLOB NOT NULL,
            input_layout_png BLOB,
            current_layout_png BLOB NOT NULL,
            initial_image_png BLOB NOT NULL,
            initial_image_hash TEXT NOT NULL,
            created_at INTEGER NOT NULL,
            updated_at INTEGER NOT NULL))");
  exec(R"(CREATE TABLE IF NOT EXISTS history (
            session_id TEXT NOT NULL REFERENCES sessions(id),
            seq INTEGER NOT NULL,
            layout_png BLOB NOT NULL,
            image_png BLOB NOT NULL,
            image_hash TEXT NOT NULL,
            created_at INTEGER NOT NULL,
            PRIMARY KEY (session_id, seq)))");
}

SessionStore::~SessionStore() { sqlite3_close(db_); }

void SessionStore::exec(const char* sql) const {
  char* error = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &error) != SQLITE_OK) {
    std::string message = error ? error : "unknown error";
    sqlite3_free(error);
    throw std::runtime_error("sqlite: " + message);
  }
}

void SessionStore::create(const EditSession& session) {
  std::lock_guard lock(mutex_);
  {
    Statement exists(db_, "SELECT 1 FROM sessions WHERE id = ?");
    if (exists.text(1, session.id).step())
      throw InvalidArgument("session " + session.id + " already exists");
  }
  exec("BEGIN IMMEDIATE");
  try {
    Statement insert(db_, R"(INSERT INTO sessions VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?))");
    insert.text(1, session.id)
        .text(2, session.model_fingerprint)
        .text(3, session.dataset)
        .real(4, session.extension_fraction)
        .blob(5, session.input_png)
        .blob(6, session.input_layout_png)
        .blob(7, session.current_layout_png)
        .blob(8, session.initial_image_png)
        .text(9, session.initial_image_hash)
        .integer(10, session.created_at)
        .integer(11, session.updated_at)
        .step();
    for (std::size_t i = 0; i < session.history.size(); ++i) {
      const auto& entry = session.history[i];
      Statement row(db_, "INSERT INTO history VALUES (?, ?, ?, ?, ?, ?)");
      row.text(1, session.id)
          .integer(2, static_cast<std::int64_t>(i))
          .blob(3, entry.layout_png)
          .blob(4, entry.image_png)
          .text(5, entry.image_hash)
          .integer(6, entry.created_at)
          .step();
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

std::optional<EditSession> SessionStore::load(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement query(db_, R"(SELECT id, model_fingerprint, dataset, extension_fraction, input_png,
                                 input_layout_png, current_layout_png, initial_image_png,
                                 initial_image_hash, created_at, updated_at
                          FROM sessions WHERE id = ?)");
  if (!query.text(1, id).step()) return std::nullopt;
  EditSession session;
  session.id = query.column_text(0);
  session.model_fingerprint = query.column_text(1);
  session.dataset = query.column_text(2);
  session.extension_fraction = query.column_real(3);
  session.input_png = query.column_blob(4);
  session.input_layout_png = query.column_blob(5);
  session.current_layout_png = query.column_blob(6);
  session.initial_image_png = query.column_blob(7);
  session.initial_image_hash = query.column_text(8);
  session.created_at = query.column_int(9);
  session.updated_at = query.column_int(10);
  Statement rows(db_, R"(SELECT layout_png, image_png, image_hash, created_at FROM history
                         WHERE session_id = ? ORDER BY seq)");
  rows.text(1, id);
  while (rows.step())
    session.history.push_back(
        {rows.column_blob(0), rows.column_blob(1), rows.column_text(2), rows.column_int(3)});
  return session;
}

void SessionStore::append(const std::string& id, const HistoryEntry& entry) {
  std::lock_guard lock(mutex_);
  exec("BEGIN IMMEDIATE");
  try {
    std::int64_t next = 0;
    {
      Statement exists(db_, "SELECT 1 FROM sessions WHERE id = ?");
      if (!exists.text(1, id).step()) throw std::out_of_range("unknown session " + id);
      Statement count(db_, "SELECT COUNT(*) FROM history WHERE session_id = ?");
      count.text(1, id).step();
      next = count.column_int(0);
    }
    Statement row(db_, "INSERT INTO history VALUES (?, ?, ?, ?, ?, ?)");
    row.text(1, id)
        .integer(2, next)
        .blob(3, entry.layout_png)
        .blob(4, entry.image_png)
        .text(5, entry.image_hash)
        .integer(6, entry.created_at)
        .step();
    Statement update(db_,
                     "UPDATE sessions SET current_layout_png = ?, updated_at = ? WHERE id = ?");
    update.blob(1, entry.layout_png).integer(2, entry.created_at).text(3, id).step();
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  Statement count(db_, "SELECT COUNT(*) FROM sessions");
  count.step();
  return static_cast<std::size_t>(count.column_int(0));
}

}  // namespace outpaint
