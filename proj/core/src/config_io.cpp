#include "hwobs/config_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "hwobs/csvio.hpp"

namespace hwobs {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap read_sections(std::istream& is) {
    SectionMap sections;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return sections;
}

const std::string& require(const SectionMap& s, const std::string& sec, const std::string& key) {
    const auto si = s.find(sec);
    if (si == s.end()) throw std::runtime_error("config missing [" + sec + "] section");
    const auto ki = si->second.find(key);
    if (ki == si->second.end())
        throw std::runtime_error("config missing key '" + key + "' in [" + sec + "]");
    return ki->second;
}

double to_double(const std::string& v, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config: cannot parse '" + v + "' as a number for " + what);
    }
}

// "0.2" -> every segment in `segments` gets 0.2; "3:0.2,6:0.25" -> per segment.
std::map<int, double> parse_param_map(const std::string& v, const std::vector<int>& segments,
                                      const std::string& what) {
    std::map<int, double> out;
    if (v.find(':') == std::string::npos) {
        const double d = to_double(v, what);
        for (int s : segments) out[s] = d;
        return out;
    }
    for (const auto& item : split(v, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("config: expected seg:value entries for " + what);
        const int seg = static_cast<int>(to_double(trim(item.substr(0, colon)), what));
        out[seg] = to_double(trim(item.substr(colon + 1)), what);
    }
    return out;
}

} // namespace

HighwayConfig parse_highway_config(std::istream& is) {
    const SectionMap s = read_sections(is);

    HighwayConfig cfg;
    cfg.fd.v_f = to_double(require(s, "diagram", "v_f"), "v_f");
    cfg.fd.w_c = to_double(require(s, "diagram", "w_c"), "w_c");
    cfg.fd.rho_c = to_double(require(s, "diagram", "rho_c"), "rho_c");
    cfg.fd.rho_m = to_double(require(s, "diagram", "rho_m"), "rho_m");

    const double l = to_double(require(s, "discretization", "l"), "l");
    const double T = to_double(require(s, "discretization", "T"), "T");

    const int N = static_cast<int>(to_double(require(s, "topology", "N"), "N"));
    const auto topo_sec = s.find("topology");
    const auto& topo_keys = topo_sec->second;
    if (topo_keys.count("pattern")) {
        if (topo_keys.at("pattern") != "paper")
            throw std::runtime_error("config: unknown topology pattern '" + topo_keys.at("pattern") + "'");
        cfg.topo = generate_paper_topology(N, l, T);
    } else {
        cfg.topo.N = N;
        cfg.topo.l = l;
        cfg.topo.T = T;
        if (topo_keys.count("onramps"))
            for (const auto& item : split(topo_keys.at("onramps"), ','))
                if (!item.empty()) cfg.topo.onramps.push_back(static_cast<int>(to_double(item, "onramps")));
        if (topo_keys.count("offramps"))
            for (const auto& item : split(topo_keys.at("offramps"), ','))
                if (!item.empty())
                    cfg.topo.offramps.push_back(static_cast<int>(to_double(item, "offramps")));
    }
    cfg.topo.l = l;
    cfg.topo.T = T;

    if (!cfg.topo.offramps.empty())
        cfg.ramps.beta = parse_param_map(require(s, "ramps", "beta"), cfg.topo.offramps, "beta");
    if (!cfg.topo.onramps.empty())
        cfg.ramps.xi = parse_param_map(require(s, "ramps", "xi"), cfg.topo.onramps, "xi");

    cfg.validate();
    return cfg;
}

HighwayConfig load_highway_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    return parse_highway_config(f);
}

std::string render_highway_config(const HighwayConfig& cfg) {
    std::ostringstream os;
    os << "[diagram]\n";
    os << "v_f = " << format_double(cfg.fd.v_f) << "\n";
    os << "w_c = " << format_double(cfg.fd.w_c) << "\n";
    os << "rho_c = " << format_double(cfg.fd.rho_c) << "\n";
    os << "rho_m = " << format_double(cfg.fd.rho_m) << "\n\n";

    os << "[topology]\n";
    os << "N = " << cfg.topo.N << "\n";
    os << "onramps = ";
    for (std::size_t i = 0; i < cfg.topo.onramps.size(); ++i)
        os << (i ? "," : "") << cfg.topo.onramps[i];
    os << "\nofframps = ";
    for (std::size_t i = 0; i < cfg.topo.offramps.size(); ++i)
        os << (i ? "," : "") << cfg.topo.offramps[i];
    os << "\n\n[ramps]\n";
    if (!cfg.ramps.beta.empty()) {
        os << "beta = ";
        bool first = true;
        for (const auto& [seg, b] : cfg.ramps.beta) {
            os << (first ? "" : ",") << seg << ":" << format_double(b);
            first = false;
        }
        os << "\n";
    }
    if (!cfg.ramps.xi.empty()) {
        os << "xi = ";
        bool first = true;
        for (const auto& [seg, v] : cfg.ramps.xi) {
            os << (first ? "" : ",") << seg << ":" << format_double(v);
            first = false;
        }
        os << "\n";
    }
    os << "\n[discretization]\n";
    os << "l = " << format_double(cfg.topo.l) << "\n";
    os << "T = " << format_double(cfg.topo.T) << "\n";
    return os.str();
}

} // namespace hwobs
