#pragma once

#include <atomic>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mceval/common.hpp"
#include "mceval/sha256.hpp"

namespace mceval {

// On-disk content-addressed response store: one file per entry, filename =
// request hash, content = canonical response JSON plus metadata. Writes are
// atomic per entry (temp file + rename), so concurrent workers and
// interrupted runs never leave a partial entry behind.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    static std::string key_for(const nlohmann::json& canonical_request) {
        return sha256_hex(canonical_request.dump());
    }

    std::optional<nlohmann::json> get(const std::string& key) const {
        std::ifstream in(entry_path(key), std::ios::binary);
        if (!in) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.contains("response")) return std::nullopt;
        return j["response"];
    }

    void put(const std::string& key, const nlohmann::json& response,
             const std::string& model) const {
        nlohmann::json entry;
        entry["response"] = response;
        entry["meta"] = {{"model", model}, {"timestamp", std::time(nullptr)}};
        auto final_path = entry_path(key);
        auto tmp_path = final_path;
        tmp_path += ".tmp." + std::to_string(tmp_counter().fetch_add(1));
        {
            std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cache: cannot write " + tmp_path.string());
            out << entry.dump();
        }
        std::error_code ec;
        std::filesystem::rename(tmp_path, final_path, ec);
        if (ec) {
            std::filesystem::remove(tmp_path);
            // lost the race with another writer; identical content, keep theirs
            if (!std::filesystem::exists(final_path))
                throw Error("cache: rename failed for " + final_path.string());
        }
    }

private:
    std::filesystem::path entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

    static std::atomic<uint64_t>& tmp_counter() {
        static std::atomic<uint64_t> c{0};
        return c;
    }

    std::filesystem::path dir_;
};

} // namespace mceval
