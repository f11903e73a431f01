#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tvc::harness {

// Minimal [section] / key=value config file. '#' and ';' start comments,
// whitespace is trimmed, keys outside a section land in "" . Values are kept
// verbatim; typed getters parse on access and throw std::invalid_argument
// with the offending section.key on bad input.
class ConfigFile {
  public:
    ConfigFile() = default;

    static ConfigFile parse_file(const std::filesystem::path& path);
    static ConfigFile parse_string(const std::string& text);

    // "section.key=value"; later writes win. Used for CLI overrides.
    void set(const std::string& dotted_key, const std::string& value);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& section, const std::string& key,
                         std::size_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // Comma-separated list of unsigned integers.
    std::vector<std::uint64_t> get_u64_list(const std::string& section, const std::string& key,
                                            std::vector<std::uint64_t> fallback) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) const;
    std::vector<std::string> get_str_list(const std::string& section, const std::string& key,
                                          std::vector<std::string> fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace tvc::harness
