#include "linksim/linksim.hpp"
#include "linksim/deadtime_state.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace qkd::linksim {

// ---------------------------------------------------------------- validation

void validate(const source_config& s) {
    if (s.mu < 0 || s.nu1 < 0 || s.nu2 < 0)
        fail(errc::config_invalid, "source intensities must be non-negative");
    if (!(s.nu2 < s.nu1))
        fail(errc::intensity_order, "decoy intensities must satisfy nu2 < nu1");
    if (!(s.nu1 + s.nu2 < s.mu))
        fail(errc::intensity_order, "decoy intensities must satisfy nu1 + nu2 < mu");
    if (s.p_mu < 0 || s.p_nu1 < 0 || s.p_nu2 < 0)
        fail(errc::config_invalid, "class probabilities must be non-negative");
    if (std::abs(s.p_mu + s.p_nu1 + s.p_nu2 - 1.0) > 1e-9)
        fail(errc::config_invalid, "class probabilities must sum to 1");
    if (s.f_p_hz <= 0) fail(errc::config_invalid, "pulse rate must be positive");
    if (s.train_length < 1) fail(errc::config_invalid, "train_length must be at least 1");
}

void validate(const channel_config& c) {
    if (c.loss_db < 0) fail(errc::config_invalid, "channel loss must be non-negative");
    if (c.misalignment < 0 || c.misalignment > 0.5)
        fail(errc::config_invalid, "misalignment must lie in [0, 0.5]");
}

void validate(const detector_model& d) {
    if (d.efficiency < 0 || d.efficiency > 1)
        fail(errc::config_invalid, "detector efficiency must lie in [0, 1]");
    if (d.dark_prob < 0 || d.dark_prob > 1)
        fail(errc::config_invalid, "dark probability must lie in [0, 1]");
    if (d.gate_period_s <= 0) fail(errc::config_invalid, "gate period must be positive");
    if (d.deadtime_s < 0) fail(errc::config_invalid, "deadtime must be non-negative");
    if (d.crosslink_delay_gates < 0)
        fail(errc::config_invalid, "crosslink delay must be non-negative");
    if (!d.recovery_profile.empty()) {
        for (double v : d.recovery_profile)
            if (v < 0 || v > 1)
                fail(errc::config_invalid, "recovery profile values must lie in [0, 1]");
        if (d.recovery_profile.back() != 1.0)
            fail(errc::config_invalid, "recovery profile must end at 1");
    }
    if (!(d.e_never_j < d.e_always_j))
        fail(errc::config_invalid, "bright-pulse thresholds must satisfy e_never < e_always");
    if (d.blinding_power_w <= 0)
        fail(errc::config_invalid, "blinding power must be positive");
}

// --------------------------------------------------------------------- names

const char* intensity_name(intensity_class c) {
    switch (c) {
    case intensity_class::mu: return "mu";
    case intensity_class::nu1: return "nu1";
    case intensity_class::nu2: return "nu2";
    }
    fail(errc::generic, "unreachable intensity class");
}

const char* flag_name(click_flag f) {
    switch (f) {
    case click_flag::single: return "single";
    case click_flag::double_click: return "double";
    case click_flag::dark: return "dark";
    }
    fail(errc::generic, "unreachable click flag");
}

intensity_class intensity_from_name(const std::string& name) {
    if (name == "mu") return intensity_class::mu;
    if (name == "nu1") return intensity_class::nu1;
    if (name == "nu2") return intensity_class::nu2;
    fail(errc::config_invalid, "unknown intensity class '" + name + "'");
}

click_flag flag_from_name(const std::string& name) {
    if (name == "single") return click_flag::single;
    if (name == "double") return click_flag::double_click;
    if (name == "dark") return click_flag::dark;
    fail(errc::config_invalid, "unknown click flag '" + name + "'");
}

// ------------------------------------------------------------------ samplers

uint32_t sample_photon_number(double intensity, rng& r) {
    if (intensity < 0) fail(errc::config_invalid, "intensity must be non-negative");
    return r.poisson(intensity);
}

uint32_t thin(uint32_t n, double transmittance, rng& r) {
    if (transmittance < 0 || transmittance > 1)
        fail(errc::config_invalid, "transmittance must lie in [0, 1]");
    return r.binomial(n, transmittance);
}

bool detect_single_photon(uint32_t n, const detector_model& d, rng& r) {
    double p_photon = n == 0 ? 0.0 : 1.0 - std::pow(1.0 - d.efficiency, double(n));
    bool photon_click = r.bernoulli(p_photon);
    bool dark_click = r.bernoulli(d.dark_prob);
    return photon_click || dark_click;
}

double detect_bright(double e_j, double cw_power_w, const detector_model& d) {
    if (cw_power_w < d.blinding_power_w)
        fail(errc::not_blinded, "detector is not blinded: cw power below blinding threshold");
    if (e_j < d.e_never_j) return 0.0;
    if (e_j >= d.e_always_j) return 1.0;
    return (e_j - d.e_never_j) / (d.e_always_j - d.e_never_j);
}

// ------------------------------------------------------------------- session

namespace {

struct train_result {
    std::vector<click_record> clicks; // cum_sent relative to the train start
    uint64_t sent[3] = {0, 0, 0};
};

train_result run_train(uint32_t train_index, const source_config& source,
                       const channel_config& channel, const detector_model& det0,
                       const detector_model& det1, bool four_state, rng train_rng) {
    train_result out;
    const double t = std::pow(10.0, -channel.loss_db / 10.0);
    for (uint32_t slot = 0; slot < source.train_length; ++slot) {
        uint8_t a_basis = uint8_t(train_rng.bit());
        uint8_t a_bit = uint8_t(train_rng.bit());
        double u = train_rng.uniform();
        intensity_class cls = u < source.p_mu ? intensity_class::mu
                              : u < source.p_mu + source.p_nu1 ? intensity_class::nu1
                                                               : intensity_class::nu2;
        double mean = cls == intensity_class::mu    ? source.mu
                      : cls == intensity_class::nu1 ? source.nu1
                                                    : source.nu2;
        out.sent[unsigned(cls)] += 1;
        uint32_t n_src = sample_photon_number(mean, train_rng);
        uint32_t n_arrived = thin(n_src, t, train_rng);
        uint8_t effective_bit = a_bit ^ uint8_t(train_rng.bernoulli(channel.misalignment));
        uint8_t b_basis = uint8_t(train_rng.bit());
        uint8_t swap = four_state ? uint8_t(train_rng.bit()) : 0;

        // Route arriving photons: matched basis sends all of them to the
        // detector assigned to the encoded bit; mismatched basis splits each
        // photon 50/50.
        uint32_t n_at[2] = {0, 0};
        if (b_basis == a_basis) {
            n_at[effective_bit ^ swap] = n_arrived;
        } else {
            for (uint32_t k = 0; k < n_arrived; ++k) n_at[train_rng.bit()] += 1;
        }

        // Four detector draws per pulse, always, to keep the stream aligned
        // across configurations.
        double p0 = n_at[0] == 0 ? 0.0 : 1.0 - std::pow(1.0 - det0.efficiency, double(n_at[0]));
        double p1 = n_at[1] == 0 ? 0.0 : 1.0 - std::pow(1.0 - det1.efficiency, double(n_at[1]));
        bool photon0 = train_rng.bernoulli(p0);
        bool dark0 = train_rng.bernoulli(det0.dark_prob);
        bool photon1 = train_rng.bernoulli(p1);
        bool dark1 = train_rng.bernoulli(det1.dark_prob);
        bool click0 = photon0 || dark0;
        bool click1 = photon1 || dark1;
        if (!click0 && !click1) continue;

        click_record rec;
        rec.train = train_index;
        rec.slot = slot;
        rec.bob_basis = b_basis;
        rec.alice_basis = a_basis;
        rec.alice_bit = a_bit;
        rec.intensity = uint8_t(cls);
        rec.swap = swap;
        rec.src_photons = uint16_t(std::min<uint32_t>(n_src, 0xffff));
        if (click0 && click1) {
            uint8_t resolved = uint8_t(train_rng.bit());
            rec.flag = uint8_t(click_flag::double_click);
            rec.bob_bit = resolved;
            rec.detector = resolved ^ swap;
        } else {
            uint8_t d = click1 ? 1 : 0;
            bool dark_only = d == 0 ? (!photon0 && dark0) : (!photon1 && dark1);
            rec.flag = uint8_t(dark_only ? click_flag::dark : click_flag::single);
            rec.detector = d;
            rec.bob_bit = d ^ swap;
        }
        rec.cum_sent[0] = out.sent[0];
        rec.cum_sent[1] = out.sent[1];
        rec.cum_sent[2] = out.sent[2];
        out.clicks.push_back(rec);
    }
    return out;
}

} // namespace

session_log run_session(const source_config& source, const channel_config& channel,
                        const detector_model& det0, const detector_model& det1,
                        const session_options& options) {
    validate(source);
    validate(channel);
    validate(det0);
    validate(det1);
    if (options.n_trains < 1) fail(errc::config_invalid, "n_trains must be at least 1");

    rng base(options.seed);
    std::vector<train_result> trains(options.n_trains);

    unsigned n_threads = options.n_threads > 0
                             ? unsigned(options.n_threads)
                             : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, options.n_trains);
    bool four_state = options.four_state_bob;

    auto worker = [&](unsigned w) {
        for (uint32_t i = w; i < options.n_trains; i += n_threads)
            trains[i] = run_train(i, source, channel, det0, det1, four_state,
                                  base.substream(i));
    };
    if (n_threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker, w);
        for (auto& th : pool) th.join();
    }

    session_log log;
    log.header.seed = options.seed;
    log.header.n_trains = options.n_trains;
    log.header.train_length = source.train_length;
    log.header.four_state = four_state ? 1 : 0;
    uint64_t offset[3] = {0, 0, 0};
    std::size_t total_clicks = 0;
    for (const auto& tr : trains) total_clicks += tr.clicks.size();
    log.clicks.reserve(total_clicks);
    for (auto& tr : trains) {
        for (auto rec : tr.clicks) {
            rec.cum_sent[0] += offset[0];
            rec.cum_sent[1] += offset[1];
            rec.cum_sent[2] += offset[2];
            log.clicks.push_back(rec);
        }
        for (int c = 0; c < 3; ++c) offset[c] += tr.sent[c];
    }
    for (int c = 0; c < 3; ++c) log.header.sent[c] = offset[c];
    return log;
}

// ------------------------------------------------------------------ deadtime

session_log apply_hardware_deadtime(const session_log& log, const detector_model& det0,
                                    const detector_model& det1, uint64_t seed) {
    validate(det0);
    validate(det1);
    deadtime_state state[2] = {make_deadtime_state(det0), make_deadtime_state(det1)};
    const int cross[2] = {det0.crosslink_delay_gates, det1.crosslink_delay_gates};
    rng r(seed);

    session_log out;
    out.header = log.header;
    out.clicks.reserve(log.clicks.size());
    uint64_t prev_gate = 0;
    bool first = true;
    for (const auto& rec : log.clicks) {
        uint64_t g = absolute_gate(rec, log.header.train_length);
        if (!first && g < prev_gate)
            fail(errc::config_invalid, "session log is not in chronological order");
        prev_gate = g;
        first = false;

        auto survives = [&](int d) {
            double m = state[d].sensitivity(g);
            if (m >= 1.0) return true;
            if (m <= 0.0) return false;
            return r.bernoulli(m);
        };
        // A surviving click on detector d blocks d immediately and its
        // partner from crosslink_delay gates later.
        auto block = [&](int d) {
            state[d].push(g);
            state[1 - d].push(g + uint64_t(cross[d]));
        };

        if (rec.flag == uint8_t(click_flag::double_click)) {
            bool s0 = survives(0);
            bool s1 = survives(1);
            if (!s0 && !s1) continue;
            click_record kept = rec;
            if (s0 && s1) {
                block(0);
                block(1);
            } else {
                // Forced single: only the surviving detector actually fired.
                int d = s0 ? 0 : 1;
                kept.flag = uint8_t(click_flag::single);
                kept.detector = uint8_t(d);
                kept.bob_bit = uint8_t(d) ^ kept.swap;
                block(d);
            }
            out.clicks.push_back(kept);
        } else {
            int d = rec.detector;
            if (!survives(d)) continue;
            block(d);
            out.clicks.push_back(rec);
        }
    }
    return out;
}

session_log software_deadtime_filter(const session_log& log, uint64_t window_gates) {
    session_log out;
    out.header = log.header;
    out.clicks.reserve(log.clicks.size());
    bool have_prev = false;
    uint64_t prev = 0;
    for (const auto& rec : log.clicks) {
        uint64_t g = absolute_gate(rec, log.header.train_length);
        bool keep = !have_prev || g - prev >= window_gates;
        // Retained or discarded, the click renews the window.
        prev = g;
        have_prev = true;
        if (keep) out.clicks.push_back(rec);
    }
    return out;
}

// ------------------------------------------------------------------- log IO

namespace {

nlohmann::json header_to_json(const session_header& h) {
    nlohmann::json j;
    j["seed"] = h.seed;
    j["n_trains"] = h.n_trains;
    j["train_length"] = h.train_length;
    j["four_state"] = h.four_state != 0;
    j["sent"] = {h.sent[0], h.sent[1], h.sent[2]};
    return j;
}

session_header header_from_json(const nlohmann::json& j) {
    session_header h;
    try {
        h.seed = j.at("seed").get<uint64_t>();
        h.n_trains = j.at("n_trains").get<uint32_t>();
        h.train_length = j.at("train_length").get<uint32_t>();
        h.four_state = j.at("four_state").get<bool>() ? 1 : 0;
        auto sent = j.at("sent").get<std::vector<uint64_t>>();
        if (sent.size() != 3) fail(errc::config_invalid, "session header: sent needs 3 counts");
        for (int c = 0; c < 3; ++c) h.sent[c] = sent[std::size_t(c)];
    } catch (const nlohmann::json::exception& e) {
        fail(errc::config_invalid, std::string("bad session header: ") + e.what());
    }
    return h;
}

void validate_record(const click_record& rec, const session_header& h) {
    if (rec.slot >= h.train_length)
        fail(errc::config_invalid, "session log record has slot >= train_length");
    if (rec.detector > 1 || rec.bob_basis > 1 || rec.bob_bit > 1 || rec.alice_basis > 1 ||
        rec.alice_bit > 1 || rec.swap > 1 || rec.flag > 2 || rec.intensity > 2)
        fail(errc::config_invalid, "session log record has out-of-range fields");
}

constexpr char binary_magic[8] = {'Q', 'K', 'D', 'W', 'B', 'L', 'G', '1'};
constexpr std::size_t binary_record_size = 42;

template <typename T> void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

template <typename T> T get_le(const char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= T(uint8_t(p[i])) << (8 * i);
    return v;
}

} // namespace

void save_session_csv(const session_log& log, const std::string& path) {
    std::ostringstream out;
    out << "# qkdwb.session/1 " << header_to_json(log.header).dump() << "\n";
    out << "train,slot,detector,basis,bit,flag,alice_basis,alice_bit,intensity,swap,"
           "src_photons,cum_mu,cum_nu1,cum_nu2\n";
    for (const auto& r : log.clicks) {
        out << r.train << ',' << r.slot << ',' << int(r.detector) << ',' << int(r.bob_basis)
            << ',' << int(r.bob_bit) << ',' << flag_name(click_flag(r.flag)) << ','
            << int(r.alice_basis) << ',' << int(r.alice_bit) << ','
            << intensity_name(intensity_class(r.intensity)) << ',' << int(r.swap) << ','
            << r.src_photons << ',' << r.cum_sent[0] << ',' << r.cum_sent[1] << ','
            << r.cum_sent[2] << "\n";
    }
    write_text_file(path, out.str());
}

void save_session_binary(const session_log& log, const std::string& path) {
    std::string out;
    out.append(binary_magic, sizeof binary_magic);
    std::string header = header_to_json(log.header).dump();
    put_le<uint32_t>(out, uint32_t(header.size()));
    out += header;
    put_le<uint64_t>(out, log.clicks.size());
    out.reserve(out.size() + log.clicks.size() * binary_record_size);
    for (const auto& r : log.clicks) {
        put_le<uint32_t>(out, r.train);
        put_le<uint32_t>(out, r.slot);
        out.push_back(char(r.detector));
        out.push_back(char(r.bob_basis));
        out.push_back(char(r.bob_bit));
        out.push_back(char(r.flag));
        out.push_back(char(r.alice_basis));
        out.push_back(char(r.alice_bit));
        out.push_back(char(r.intensity));
        out.push_back(char(r.swap));
        put_le<uint16_t>(out, r.src_photons);
        put_le<uint64_t>(out, r.cum_sent[0]);
        put_le<uint64_t>(out, r.cum_sent[1]);
        put_le<uint64_t>(out, r.cum_sent[2]);
    }
    write_text_file(path, out);
}

namespace {

session_log load_session_csv(const std::string& text, const std::string& path) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# qkdwb.session/1 ", 0) != 0)
        fail(errc::config_invalid, "'" + path + "' is not a session CSV (missing header line)");
    session_log log;
    try {
        log.header = header_from_json(nlohmann::json::parse(line.substr(18)));
    } catch (const nlohmann::json::exception& e) {
        fail(errc::config_invalid, std::string("bad session header json: ") + e.what());
    }
    if (!std::getline(in, line) || line.rfind("train,slot,", 0) != 0)
        fail(errc::config_invalid, "'" + path + "' is missing the session column header");
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 14)
            fail(errc::config_invalid, path + ":" + std::to_string(line_no) +
                                           ": expected 14 fields, got " +
                                           std::to_string(fields.size()));
        click_record r;
        try {
            r.train = uint32_t(std::stoul(fields[0]));
            r.slot = uint32_t(std::stoul(fields[1]));
            r.detector = uint8_t(std::stoul(fields[2]));
            r.bob_basis = uint8_t(std::stoul(fields[3]));
            r.bob_bit = uint8_t(std::stoul(fields[4]));
            r.flag = uint8_t(flag_from_name(fields[5]));
            r.alice_basis = uint8_t(std::stoul(fields[6]));
            r.alice_bit = uint8_t(std::stoul(fields[7]));
            r.intensity = uint8_t(intensity_from_name(fields[8]));
            r.swap = uint8_t(std::stoul(fields[9]));
            r.src_photons = uint16_t(std::stoul(fields[10]));
            r.cum_sent[0] = std::stoull(fields[11]);
            r.cum_sent[1] = std::stoull(fields[12]);
            r.cum_sent[2] = std::stoull(fields[13]);
        } catch (const std::exception&) {
            fail(errc::config_invalid,
                 path + ":" + std::to_string(line_no) + ": cannot parse session row");
        }
        validate_record(r, log.header);
        log.clicks.push_back(r);
    }
    return log;
}

session_log load_session_binary(const std::string& blob, const std::string& path) {
    std::size_t pos = sizeof binary_magic;
    if (blob.size() < pos + 4) fail(errc::config_invalid, "'" + path + "' is truncated");
    uint32_t header_len = get_le<uint32_t>(blob.data() + pos);
    pos += 4;
    if (blob.size() < pos + header_len + 8)
        fail(errc::config_invalid, "'" + path + "' is truncated");
    session_log log;
    try {
        log.header = header_from_json(nlohmann::json::parse(blob.substr(pos, header_len)));
    } catch (const nlohmann::json::exception& e) {
        fail(errc::config_invalid, std::string("bad session header json: ") + e.what());
    }
    pos += header_len;
    uint64_t count = get_le<uint64_t>(blob.data() + pos);
    pos += 8;
    if (blob.size() - pos != count * binary_record_size)
        fail(errc::config_invalid, "'" + path + "' record area has the wrong size");
    log.clicks.reserve(std::size_t(count));
    for (uint64_t i = 0; i < count; ++i) {
        const char* p = blob.data() + pos + std::size_t(i) * binary_record_size;
        click_record r;
        r.train = get_le<uint32_t>(p);
        r.slot = get_le<uint32_t>(p + 4);
        r.detector = uint8_t(p[8]);
        r.bob_basis = uint8_t(p[9]);
        r.bob_bit = uint8_t(p[10]);
        r.flag = uint8_t(p[11]);
        r.alice_basis = uint8_t(p[12]);
        r.alice_bit = uint8_t(p[13]);
        r.intensity = uint8_t(p[14]);
        r.swap = uint8_t(p[15]);
        r.src_photons = get_le<uint16_t>(p + 16);
        r.cum_sent[0] = get_le<uint64_t>(p + 18);
        r.cum_sent[1] = get_le<uint64_t>(p + 26);
        r.cum_sent[2] = get_le<uint64_t>(p + 34);
        validate_record(r, log.header);
        log.clicks.push_back(r);
    }
    return log;
}

} // namespace

session_log load_session(const std::string& path) {
    std::string blob = read_text_file(path);
    if (blob.size() >= sizeof binary_magic &&
        std::memcmp(blob.data(), binary_magic, sizeof binary_magic) == 0)
        return load_session_binary(blob, path);
    return load_session_csv(blob, path);
}

// ---------------------------------------------------------------- analytics

double expected_gain(double intensity, double transmittance, const detector_model& det0,
                     const detector_model& det1) {
    double silent = (1.0 - det0.dark_prob) * (1.0 - det1.dark_prob) *
                    std::exp(-intensity * transmittance * det0.efficiency);
    return 1.0 - silent;
}

} // namespace qkd::linksim
