#include "iothub/hub.hpp"

#include "iothub/error.hpp"
#include "iothub/hash.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <random>
#include <regex>

namespace iothub {

namespace {

[[noreturn]] void config_fail(const std::string& msg) {
    throw Error(Errc::config_error, "hub config: " + msg);
}

bool valid_resource_id(const std::string& id) {
    static const std::regex re(R"(^[A-Za-z0-9_][A-Za-z0-9_.:-]*$)");
    return std::regex_match(id, re);
}

std::string random_token() {
    std::random_device rd;
    std::uniform_int_distribution<int> hex(0, 15);
    std::string out;
    for (int i = 0; i < 32; ++i) {
        out += "0123456789abcdef"[hex(rd)];
    }
    return out;
}

std::int64_t query_int(const ApiRequest& req, const std::string& key, std::int64_t fallback) {
    auto it = req.query.find(key);
    if (it == req.query.end()) {
        return fallback;
    }
    std::int64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(Errc::schema_error, "query parameter '" + key + "' must be an integer", key);
    }
    return v;
}

json scopes_json(const std::set<Scope>& grants) {
    json out = json::array();
    for (auto s : grants) {
        out.push_back(std::string(to_string(s)));
    }
    return out;
}

json token_json(const AccessToken& t) {
    return json{{"token", t.token}, {"grants", scopes_json(t.grants)}, {"label", t.label}};
}

json subscription_json(const SubscriptionInfo& s) {
    return json{{"id", s.id}, {"feed_id", s.feed_id}, {"callback_url", s.url}, {"created_at", s.created_at}};
}

ApiResponse no_content() {
    ApiResponse r;
    r.status = 204;
    r.content_type = "text/plain";
    return r;
}

ApiResponse not_found() {
    return error_response(404, "not_found", "no such route");
}

ApiResponse forbidden(const std::string& msg) {
    return error_response(403, "forbidden", msg);
}

/// Maps an error body returned by a meta-hub back to a domain error.
[[noreturn]] void raise_remote(const HttpResponse& res, const std::string& url) {
    try {
        const json body = json::parse(res.body);
        const std::string code = body.value("error", "");
        for (int i = 0; i <= static_cast<int>(Errc::io_error); ++i) {
            const auto e = static_cast<Errc>(i);
            if (to_string(e) == code) {
                throw Error(e, "meta-hub " + url + ": " + body.value("message", code));
            }
        }
    } catch (const json::exception&) {
    }
    throw Error(Errc::metahub_unreachable,
                "meta-hub " + url + " answered " + std::to_string(res.status), url);
}

} // namespace

HubConfig parse_hub_config(const json& j) {
    if (!j.is_object()) {
        config_fail("must be a JSON object");
    }
    static const std::set<std::string> known = {
        "hub_id", "bind_address", "listen_port", "base_uri", "data_dir", "metahub_urls", "city_table_path",
        "clock_mode", "owner_token", "position", "accuracy", "latency_ms", "enablers", "semantic_types"};
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) {
            config_fail("unknown key '" + k + "'");
        }
    }
    HubConfig c;
    try {
        c.hub_id = j.value("hub_id", c.hub_id);
        c.bind_address = j.value("bind_address", c.bind_address);
        c.listen_port = j.value("listen_port", c.listen_port);
        c.base_uri = j.value("base_uri", std::string());
        if (j.contains("data_dir")) {
            c.data_dir = j.at("data_dir").get<std::string>();
        }
        c.metahub_urls = j.value("metahub_urls", std::vector<std::string>{});
        if (j.contains("city_table_path")) {
            c.city_table_path = j.at("city_table_path").get<std::string>();
        }
        const std::string mode = j.value("clock_mode", std::string("wall"));
        if (mode == "wall") {
            c.clock_mode = ClockMode::Wall;
        } else if (mode == "simulated") {
            c.clock_mode = ClockMode::Simulated;
        } else {
            config_fail("clock_mode must be wall or simulated");
        }
        c.owner_token = j.value("owner_token", std::string());
        if (j.contains("position")) {
            c.position = GeoPoint{j.at("position").at("lat").get<double>(), j.at("position").at("lon").get<double>()};
        }
        if (j.contains("accuracy")) {
            c.accuracy = j.at("accuracy").get<double>();
        }
        if (j.contains("latency_ms")) {
            c.latency_ms = j.at("latency_ms").get<double>();
        }
        for (const auto& e : j.value("enablers", json::array())) {
            c.enablers.push_back({e.at("enabler").get<std::string>(), e.value("config", json::object())});
        }
        if (j.contains("semantic_types")) {
            c.semantic_types = decode<std::vector<SemanticType>>(j.at("semantic_types"));
        }
    } catch (const json::exception& e) {
        config_fail(e.what());
    } catch (const Error& e) {
        config_fail(e.what());
    }
    if (c.hub_id.empty() || !valid_resource_id(c.hub_id)) {
        config_fail("hub_id must be a non-empty identifier");
    }
    if (c.listen_port < 1 || c.listen_port > 65535) {
        config_fail("listen_port must be in [1, 65535]");
    }
    if (c.owner_token.empty()) {
        config_fail("owner_token is required");
    }
    for (const auto& url : c.metahub_urls) {
        if (!split_url(url)) {
            config_fail("bad meta-hub url '" + url + "'");
        }
    }
    if (!c.base_uri.empty() && !split_url(c.base_uri)) {
        config_fail("bad base_uri '" + c.base_uri + "'");
    }
    if (c.position && !valid_coordinates(*c.position)) {
        config_fail("position out of range");
    }
    if (c.accuracy && (*c.accuracy < 0 || *c.accuracy > 1)) {
        config_fail("accuracy must be in [0, 1]");
    }
    if (c.latency_ms && *c.latency_ms < 0) {
        config_fail("latency_ms must be non-negative");
    }
    return c;
}

HubConfig load_hub_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        config_fail("cannot read " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        config_fail(path.string() + ": " + e.what());
    }
    HubConfig c = parse_hub_config(j);
    // Relative paths are taken from the config file's directory.
    const auto base = path.parent_path();
    if (c.data_dir && c.data_dir->is_relative()) {
        c.data_dir = base / *c.data_dir;
    }
    if (c.city_table_path && c.city_table_path->is_relative()) {
        c.city_table_path = base / *c.city_table_path;
    }
    for (auto& e : c.enablers) {
        if (e.config.contains("trace_path")) {
            std::filesystem::path p = e.config["trace_path"].get<std::string>();
            if (p.is_relative()) {
                e.config["trace_path"] = (base / p).string();
            }
        }
    }
    return c;
}

bool authorize(const AccessToken& token, Scope feed_scope) {
    return std::any_of(token.grants.begin(), token.grants.end(), [&](Scope g) { return g <= feed_scope; });
}

void to_json(json& j, const PublicationRecord& r) {
    j = json{{"feed_id", r.feed_id},
             {"metahub_url", r.metahub_url},
             {"published_at", r.published_at},
             {"descriptor_hash", r.descriptor_hash}};
}

int http_status(Errc code) {
    switch (code) {
    case Errc::unknown_feed:
    case Errc::unknown_app:
    case Errc::unknown_enabler:
    case Errc::unregistered_hub:
    case Errc::unknown_scenario: return 404;
    case Errc::cycle_error:
    case Errc::duplicate_id:
    case Errc::has_dependents:
    case Errc::already_running:
    case Errc::not_running:
    case Errc::not_bound:
    case Errc::duplicate_version: return 409;
    case Errc::scope_violation: return 403;
    case Errc::metahub_unreachable: return 502;
    case Errc::io_error: return 500;
    default: return 400;
    }
}

ApiResponse error_response(const Error& e) {
    json body = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (!e.subject().empty()) {
        body["subject"] = e.subject();
    }
    return json_response(http_status(e.code()), body);
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, json{{"error", code}, {"message", message}});
}

ApiResponse json_response(int status, const json& body) {
    ApiResponse r;
    r.status = status;
    r.body = canonical(body);
    return r;
}

// ---------------------------------------------------------------------------

Hub::Hub(HubConfig config, Scheduler* clock, HttpTransport transport)
    : config_(std::move(config)), clock_(clock), transport_(std::move(transport)) {
    if (config_.owner_token.empty()) {
        config_fail("owner_token is required");
    }
    if (!clock_) {
        if (config_.clock_mode == ClockMode::Simulated) {
            owned_clock_ = std::make_unique<SimulatedScheduler>(0);
        } else {
            owned_clock_ = std::make_unique<WallScheduler>();
        }
        clock_ = owned_clock_.get();
    }
    if (!transport_) {
        transport_ = http_transport();
    }

    types_ = TypeRegistry::defaults();
    for (const auto& t : config_.semantic_types) {
        try {
            types_.add(t);
        } catch (const Error& e) {
            config_fail(e.what());
        }
    }
    EngineOptions opts;
    opts.types = &types_;
    opts.storage.data_dir = config_.data_dir;
    opts.clock = clock_;
    opts.webhook_poster = [transport = transport_](const std::string& url, const std::string& body) {
        const auto res = transport("POST", url, body, {{"Content-Type", "application/json"}});
        return res && res->status >= 200 && res->status < 300;
    };
    if (config_.city_table_path) {
        try {
            opts.cities = CityTable::load(*config_.city_table_path);
        } catch (const Error& e) {
            config_fail(e.what());
        }
    }
    engine_ = std::make_unique<Engine>(std::move(opts));
    enablers_ = std::make_unique<EnablerRegistry>(*engine_, *clock_, config_.hub_id);
    apps_ = std::make_unique<AppEngine>(*engine_, *enablers_);

    tokens_[config_.owner_token] =
        AccessToken{config_.owner_token, {Scope::Private, Scope::Hub, Scope::Global}, "owner", true};
    base_uri_ = config_.base_uri.empty()
                    ? "http://" + config_.bind_address + ":" + std::to_string(config_.listen_port)
                    : config_.base_uri;

    for (const auto& inst : config_.enablers) {
        try {
            enablers_->instantiate(inst.enabler, inst.config);
        } catch (const Error& e) {
            config_fail("enabler '" + inst.enabler + "': " + e.what());
        }
    }
}

Hub::~Hub() {
    apps_->stop_all();
    enablers_->stop_all();
    // Join a wall-clock worker before the objects its tasks touch go away.
    owned_clock_.reset();
    close_streams();
    apps_.reset();
    enablers_.reset();
    engine_.reset();
}

std::string Hub::base_uri() const {
    std::shared_lock lock(mutex_);
    return base_uri_;
}

void Hub::set_base_uri(std::string uri) {
    std::unique_lock lock(mutex_);
    base_uri_ = std::move(uri);
}

AccessToken Hub::issue_token(std::set<Scope> grants, std::string label) {
    if (grants.empty()) {
        throw Error(Errc::config_error, "a token needs at least one grant");
    }
    if (grants.contains(Scope::Private)) {
        throw Error(Errc::scope_violation, "private grants are reserved for the owner");
    }
    AccessToken t{random_token(), std::move(grants), std::move(label), false};
    std::unique_lock lock(mutex_);
    while (tokens_.contains(t.token)) {
        t.token = random_token();
    }
    tokens_[t.token] = t;
    return t;
}

bool Hub::revoke_token(const std::string& token) {
    if (token == config_.owner_token) {
        throw Error(Errc::config_error, "the owner token cannot be revoked");
    }
    std::unique_lock lock(mutex_);
    return tokens_.erase(token) > 0;
}

std::optional<AccessToken> Hub::find_token(const std::string& token) const {
    std::shared_lock lock(mutex_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Hub::register_with(const std::string& metahub_url) {
    const json body = {{"hub_id", config_.hub_id}, {"base_uri", base_uri()}};
    const auto res = transport_("POST", metahub_url + "/hubs", canonical(body), {{"X-Hub-Id", config_.hub_id}});
    if (!res) {
        throw Error(Errc::metahub_unreachable, "meta-hub " + metahub_url + " is unreachable", metahub_url);
    }
    if (res->status < 200 || res->status >= 300) {
        raise_remote(*res, metahub_url);
    }
}

std::vector<std::string> Hub::register_with_metahubs() {
    std::vector<std::string> failed;
    for (const auto& url : config_.metahub_urls) {
        try {
            register_with(url);
        } catch (const Error&) {
            failed.push_back(url);
        }
    }
    return failed;
}

PublicationRecord Hub::publish_to_metahub(const std::string& feed_id, const std::string& metahub_url) {
    if (!split_url(metahub_url)) {
        throw Error(Errc::invalid_uri, "bad meta-hub url '" + metahub_url + "'", metahub_url);
    }
    const FeedDescriptor desc = engine_->feed(feed_id);
    if (desc.scope != Scope::Global) {
        throw Error(Errc::scope_violation, "feed '" + feed_id + "' is not global", feed_id);
    }
    const std::string hash = descriptor_hash(desc);
    {
        std::shared_lock lock(mutex_);
        for (const auto& r : publications_) {
            if (r.feed_id == feed_id && r.metahub_url == metahub_url && r.descriptor_hash == hash) {
                return r;
            }
        }
    }

    json body = {{"hub_id", config_.hub_id}, {"base_uri", base_uri()}, {"descriptor", desc}};
    if (config_.position) {
        body["position"] = value_to_json(*config_.position);
    }
    if (config_.accuracy) {
        body["accuracy"] = *config_.accuracy;
    }
    if (config_.latency_ms) {
        body["latency_ms"] = *config_.latency_ms;
    }
    const std::map<std::string, std::string> headers = {{"X-Hub-Id", config_.hub_id}};
    auto send = [&] { return transport_("POST", metahub_url + "/catalog/feeds", canonical(body), headers); };
    auto res = send();
    if (res && res->status == 404) {
        // Not registered yet (or the meta-hub restarted): register and retry once.
        register_with(metahub_url);
        res = send();
    }
    if (!res) {
        throw Error(Errc::metahub_unreachable, "meta-hub " + metahub_url + " is unreachable", metahub_url);
    }
    if (res->status < 200 || res->status >= 300) {
        raise_remote(*res, metahub_url);
    }

    PublicationRecord rec{feed_id, metahub_url, engine_->now_ms(), hash};
    std::unique_lock lock(mutex_);
    auto it = std::find_if(publications_.begin(), publications_.end(), [&](const PublicationRecord& r) {
        return r.feed_id == feed_id && r.metahub_url == metahub_url;
    });
    if (it != publications_.end()) {
        *it = rec;
    } else {
        publications_.push_back(rec);
    }
    return rec;
}

std::vector<PublicationRecord> Hub::publications() const {
    std::shared_lock lock(mutex_);
    return publications_;
}

std::string Hub::state_digest() const {
    json state = json::object();
    json feeds = json::array();
    for (const auto& f : engine_->feeds()) {
        json subs = json::array();
        for (const auto& s : engine_->subscriptions(f.id)) {
            if (s.kind != SinkKind::EventStream) {
                subs.push_back(subscription_json(s));
            }
        }
        const auto latest = engine_->storage().latest(f.id);
        feeds.push_back({{"descriptor", f},
                         {"size", engine_->storage().size(f.id)},
                         {"last_seq", engine_->storage().last_seq(f.id)},
                         {"latest", latest ? json(*latest) : json(nullptr)},
                         {"subscriptions", std::move(subs)}});
    }
    state["feeds"] = std::move(feeds);
    state["apps"] = apps_->list();
    json enablers = json::array();
    for (const auto& e : enablers_->list()) {
        enablers.push_back(e);
    }
    state["enablers"] = std::move(enablers);
    {
        std::shared_lock lock(mutex_);
        json tokens = json::array();
        for (const auto& [k, t] : tokens_) {
            tokens.push_back(token_json(t));
        }
        state["tokens"] = std::move(tokens);
        state["publications"] = publications_;
    }
    return sha256_hex(canonical(state));
}

void Hub::close_streams() {
    std::map<std::uint64_t, Stream> streams;
    {
        std::unique_lock lock(mutex_);
        streams.swap(streams_);
    }
    for (auto& [id, s] : streams) {
        engine_->unsubscribe(s.subscription);
        s.channel->close();
    }
}

ApiResponse Hub::open_stream(const std::string& feed_id) {
    auto channel = std::make_shared<EventChannel>();
    const auto sub = engine_->subscribe(feed_id, Sink::event_stream(channel));
    std::uint64_t id = 0;
    {
        std::unique_lock lock(mutex_);
        id = next_stream_++;
        streams_[id] = Stream{channel, sub.id};
    }
    ApiResponse r;
    r.status = 200;
    r.content_type = "text/event-stream";
    r.stream = channel;
    r.on_close = [this, id] {
        std::optional<Stream> s;
        {
            std::unique_lock lock(mutex_);
            if (auto it = streams_.find(id); it != streams_.end()) {
                s = it->second;
                streams_.erase(it);
            }
        }
        if (s) {
            engine_->unsubscribe(s->subscription);
            s->channel->close();
        }
    };
    return r;
}

ApiResponse Hub::handle(const ApiRequest& req) {
    const auto bearer = req.bearer();
    const auto token = bearer ? find_token(*bearer) : std::nullopt;
    if (!token) {
        return error_response(401, "unauthorized", bearer ? "unknown token" : "missing bearer token");
    }
    try {
        return route(req, *token);
    } catch (const Error& e) {
        return error_response(e);
    }
}

ApiResponse Hub::feeds_route(const ApiRequest& req, const AccessToken& token, const std::vector<std::string>& seg) {
    const std::string& m = req.method;
    if (seg.size() == 1) {
        if (m == "GET") {
            json out = json::array();
            for (const auto& f : engine_->feeds()) {
                if (authorize(token, f.scope)) {
                    out.push_back(f);
                }
            }
            return json_response(200, out);
        }
        if (m == "POST") {
            if (!token.owner) {
                return forbidden("only the owner can create feeds");
            }
            auto desc = decode<FeedDescriptor>(parse_json(req.body));
            if (!valid_resource_id(desc.id)) {
                throw Error(Errc::invalid_descriptor, "feed id '" + desc.id + "' is not a valid identifier", desc.id);
            }
            if (desc.owner.empty()) {
                desc.owner = config_.hub_id;
            }
            return json_response(201, engine_->create_feed(std::move(desc)));
        }
        return error_response(405, "method_not_allowed", m + " /feeds");
    }

    const std::string& id = seg[1];
    const FeedDescriptor desc = engine_->feed(id);
    if (!authorize(token, desc.scope)) {
        throw Error(Errc::scope_violation, "token may not access feed '" + id + "'", id);
    }
    if (seg.size() == 2) {
        if (m == "GET") {
            return json_response(200, desc);
        }
        if (m == "DELETE") {
            if (!token.owner) {
                return forbidden("only the owner can delete feeds");
            }
            engine_->delete_feed(id);
            return no_content();
        }
        return error_response(405, "method_not_allowed", m + " /feeds/{id}");
    }
    if (seg.size() != 3) {
        return not_found();
    }
    const std::string& leaf = seg[2];
    if (leaf == "data" && m == "GET") {
        const auto from = query_int(req, "from", TimeSeriesStore::kMinTime);
        const auto to = query_int(req, "to", TimeSeriesStore::kMaxTime);
        const auto limit = query_int(req, "limit", -1);
        if (req.query.contains("limit") && limit < 0) {
            throw Error(Errc::schema_error, "limit must be non-negative", "limit");
        }
        const auto samples = engine_->storage().query(
            id, from, to, limit < 0 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(limit));
        return json_response(200, samples);
    }
    if (leaf == "data" && m == "POST") {
        if (!token.owner) {
            return forbidden("only the owner can publish samples");
        }
        if (desc.kind == FeedKind::AtomicActuator || desc.kind == FeedKind::Derived) {
            throw Error(Errc::schema_error,
                        desc.kind == FeedKind::Derived ? "derived feeds are produced by their pipe"
                                                       : "actuator state changes go through /commands",
                        id);
        }
        const json body = parse_json(req.body);
        Sample s = sample_from_json(body, desc);
        if (s.feed_id != id) {
            throw Error(Errc::schema_error, "sample feed_id does not match the path", id);
        }
        if (!body.contains("seq")) {
            s = engine_->publish_next(id, std::move(s.values),
                                      body.contains("t_ms") ? std::optional(s.t_ms) : std::nullopt);
        } else {
            if (!body.contains("t_ms")) {
                s.t_ms = engine_->now_ms();
            }
            engine_->publish(s);
        }
        return json_response(201, s);
    }
    if (leaf == "latest" && m == "GET") {
        const auto latest = engine_->storage().latest(id);
        if (!latest) {
            return error_response(404, "no_data", "feed '" + id + "' has no samples yet");
        }
        return json_response(200, *latest);
    }
    if (leaf == "stream" && m == "GET") {
        return open_stream(id);
    }
    if (leaf == "commands" && m == "POST") {
        if (!token.owner) {
            return forbidden("only the owner can command actuators");
        }
        const auto cmd = parse_command(parse_json(req.body));
        const bool on = enablers_->apply_command(id, cmd);
        return json_response(200, json{{"feed_id", id}, {"on", on}});
    }
    return not_found();
}

ApiResponse Hub::route(const ApiRequest& req, const AccessToken& token) {
    const auto seg = path_segments(req.path);
    const std::string& m = req.method;
    if (seg.empty()) {
        return m == "GET" ? json_response(200, json{{"hub_id", config_.hub_id}, {"base_uri", base_uri()}})
                          : not_found();
    }
    const std::string& root = seg[0];

    if (root == "feeds") {
        return feeds_route(req, token, seg);
    }

    if (root == "subscriptions") {
        if (seg.size() == 1 && m == "POST") {
            const json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("feed_id") || !body.contains("callback_url") ||
                !body["feed_id"].is_string() || !body["callback_url"].is_string()) {
                throw Error(Errc::schema_error, "expected {feed_id, callback_url}");
            }
            const std::string feed_id = body["feed_id"];
            const std::string url = body["callback_url"];
            if (!authorize(token, engine_->feed(feed_id).scope)) {
                throw Error(Errc::scope_violation, "token may not access feed '" + feed_id + "'", feed_id);
            }
            if (!split_url(url)) {
                throw Error(Errc::invalid_uri, "callback_url must be an absolute http URL", url);
            }
            const auto sub = engine_->subscribe(feed_id, Sink::webhook(url));
            {
                std::unique_lock lock(mutex_);
                subscription_owner_[sub.id] = token.token;
            }
            return json_response(201, subscription_json(sub));
        }
        if (seg.size() == 2 && m == "DELETE") {
            {
                std::shared_lock lock(mutex_);
                auto it = subscription_owner_.find(seg[1]);
                if (it == subscription_owner_.end()) {
                    return error_response(404, "not_found", "unknown subscription '" + seg[1] + "'");
                }
                if (!token.owner && it->second != token.token) {
                    return forbidden("subscription belongs to another token");
                }
            }
            engine_->unsubscribe(seg[1]);
            std::unique_lock lock(mutex_);
            subscription_owner_.erase(seg[1]);
            return no_content();
        }
        return not_found();
    }

    // Everything below manages the hub itself.
    if (!token.owner) {
        return forbidden("owner token required");
    }

    if (root == "pipes" && seg.size() == 1 && m == "POST") {
        const json body = parse_json(req.body);
        if (!body.is_object()) {
            throw Error(Errc::schema_error, "pipe request must be an object");
        }
        const PipeSpec spec = decode<PipeSpec>(body.contains("pipe") ? body["pipe"] : body);
        DerivedFeedOptions opts;
        opts.owner = config_.hub_id;
        if (body.contains("id")) {
            opts.id = body["id"].is_string() ? body["id"].get<std::string>() : std::string();
            if (!valid_resource_id(opts.id)) {
                throw Error(Errc::invalid_descriptor, "pipe id is not a valid identifier");
            }
        } else {
            std::unique_lock lock(mutex_);
            do {
                opts.id = "pipe-" + std::to_string(next_pipe_++);
            } while (engine_->find_feed(opts.id));
        }
        if (body.contains("scope")) {
            const auto scope = body["scope"].is_string() ? parse_scope(body["scope"].get<std::string>()) : std::nullopt;
            if (!scope) {
                throw Error(Errc::schema_error, "unknown scope");
            }
            opts.scope = *scope;
        }
        if (body.contains("keywords")) {
            opts.keywords = decode<std::set<std::string>>(body["keywords"]);
        }
        return json_response(201, engine_->create_derived_feed(spec, opts));
    }

    if (root == "apps") {
        if (seg.size() == 1 && m == "POST") {
            return json_response(201, apps_->install(decode<AppPackage>(parse_json(req.body))));
        }
        if (seg.size() == 1 && m == "GET") {
            return json_response(200, apps_->list());
        }
        if (seg.size() == 2 && m == "GET") {
            return json_response(200, apps_->package(seg[1]));
        }
        if (seg.size() == 3) {
            if (seg[2] == "status" && m == "GET") {
                return json_response(200, apps_->status(seg[1]));
            }
            if (seg[2] == "start" && m == "POST") {
                return json_response(200, apps_->start(seg[1]));
            }
            if (seg[2] == "stop" && m == "POST") {
                return json_response(200, apps_->stop(seg[1]));
            }
        }
        return not_found();
    }

    if (root == "publications") {
        if (seg.size() == 1 && m == "POST") {
            const json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("feed_id") || !body["feed_id"].is_string() ||
                !body.contains("metahub_url") || !body["metahub_url"].is_string()) {
                throw Error(Errc::schema_error, "expected {feed_id, metahub_url}");
            }
            return json_response(201, publish_to_metahub(body["feed_id"], body["metahub_url"]));
        }
        if (seg.size() == 1 && m == "GET") {
            return json_response(200, publications());
        }
        return not_found();
    }

    if (root == "tokens") {
        if (seg.size() == 1 && m == "POST") {
            const json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("grants") || !body["grants"].is_array()) {
                throw Error(Errc::schema_error, "expected {grants: [...], label}");
            }
            std::set<Scope> grants;
            for (const auto& g : body["grants"]) {
                const auto s = g.is_string() ? parse_scope(g.get<std::string>()) : std::nullopt;
                if (!s) {
                    throw Error(Errc::schema_error, "unknown grant");
                }
                grants.insert(*s);
            }
            const std::string label = body.value("label", std::string());
            return json_response(201, token_json(issue_token(std::move(grants), label)));
        }
        if (seg.size() == 2 && m == "DELETE") {
            if (!revoke_token(seg[1])) {
                return error_response(404, "not_found", "unknown token");
            }
            return no_content();
        }
        return not_found();
    }

    if (root == "enablers") {
        if (seg.size() == 1 && m == "GET") {
            json out = json::array();
            for (const auto& e : enablers_->list()) {
                out.push_back(e);
            }
            return json_response(200, out);
        }
        if (seg.size() == 1 && m == "POST") {
            const auto d = decode<EnablerDescriptor>(parse_json(req.body));
            const bool added = enablers_->add_remote(d);
            return json_response(added ? 201 : 200, d);
        }
        if (seg.size() == 3 && seg[2] == "instantiate" && m == "POST") {
            const json config = req.body.empty() ? json::object() : parse_json(req.body);
            return json_response(201, json{{"feed_ids", enablers_->instantiate(seg[1], config)}});
        }
        return not_found();
    }

    return not_found();
}

} // namespace iothub
