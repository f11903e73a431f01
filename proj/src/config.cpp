#include "tvc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tvc::harness {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            cfg.sections_[section];  // sections may be empty
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

void ConfigFile::set(const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted_key.size())
        throw std::invalid_argument("config override must look like section.key, got '" +
                                    dotted_key + "'");
    sections_[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = value;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config " + section + "." + key + ": '" + v +
                                    "' is not a number");
    }
}

std::size_t ConfigFile::get_size(const std::string& section, const std::string& key,
                                 std::size_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw std::invalid_argument("config " + section + "." + key + ": '" + v +
                                    "' is not a nonnegative integer");
    }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config " + section + "." + key + ": '" + v + "' is not a bool");
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(const std::string& section,
                                                    const std::string& key,
                                                    std::vector<std::uint64_t> fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    std::vector<std::uint64_t> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const unsigned long long n = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(n);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + section + "." + key + ": '" + item +
                                        "' is not an unsigned integer");
        }
    }
    if (out.empty())
        throw std::invalid_argument("config " + section + "." + key + ": empty list");
    return out;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section, const std::string& key,
                                                std::vector<double> fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    std::vector<double> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const double d = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(d);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + section + "." + key + ": '" + item +
                                        "' is not a number");
        }
    }
    if (out.empty())
        throw std::invalid_argument("config " + section + "." + key + ": empty list");
    return out;
}

std::vector<std::string> ConfigFile::get_str_list(const std::string& section,
                                                  const std::string& key,
                                                  std::vector<std::string> fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key, "");
    std::vector<std::string> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty())
        throw std::invalid_argument("config " + section + "." + key + ": empty list");
    return out;
}

}  // namespace tvc::harness
