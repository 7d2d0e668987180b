// iothub: run a hub or meta-hub, the headless demos, and the trace generator.
//
// Exit codes: 0 ok, 1 config or usage error, 2 bind or runtime error,
// 3 a demo check failed.

#include "iothub/demo.hpp"
#include "iothub/error.hpp"
#include "iothub/hub.hpp"
#include "iothub/metahub.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kScenarioFailed = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int wait_for_signal(iothub::HttpServer& server) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.start();
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return kOk;
}

int exit_code(const iothub::Error& e) {
    return e.code() == iothub::Errc::config_error || e.code() == iothub::Errc::unknown_scenario ? kConfigError
                                                                                                : kRuntimeError;
}

int serve_hub(const std::string& config_path) {
    auto config = iothub::load_hub_config(config_path);
    const std::string host = config.bind_address;
    const int port = config.listen_port;
    iothub::Hub hub(std::move(config));
    iothub::HttpServer server([&hub](const iothub::ApiRequest& r) { return hub.handle(r); });
    if (!server.bind(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return kRuntimeError;
    }
    if (hub.config().base_uri.empty()) {
        hub.set_base_uri("http://" + host + ":" + std::to_string(server.port()));
    }
    for (const auto& url : hub.register_with_metahubs()) {
        std::cerr << "warning: could not register with " << url << "\n";
    }
    std::cout << "hub " << hub.config().hub_id << " listening on " << host << ":" << server.port() << std::endl;
    return wait_for_signal(server);
}

int serve_metahub(const std::string& config_path) {
    auto config = iothub::load_metahub_config(config_path);
    const std::string host = config.bind_address;
    const int port = config.listen_port;
    iothub::Metahub metahub(std::move(config));
    iothub::HttpServer server([&metahub](const iothub::ApiRequest& r) { return metahub.handle(r); });
    if (!server.bind(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return kRuntimeError;
    }
    std::cout << "metahub " << metahub.config().metahub_id << " listening on " << host << ":" << server.port()
              << std::endl;
    return wait_for_signal(server);
}

int report(const std::vector<iothub::DemoCheck>& checks, const std::filesystem::path& out) {
    for (const auto& c : checks) {
        std::cout << (c.ok ? "ok   " : "FAIL ") << c.name << "  " << c.detail << "\n";
    }
    std::cout << "outputs in " << out.string() << std::endl;
    return iothub::all_ok(checks) ? kOk : kScenarioFailed;
}

struct DemoArgs {
    std::string scenario;
    std::string out;
    std::uint64_t seed = 1;
    std::string stages;
    double threshold = iothub::kDefaultShakeThreshold;
    int weeks = 4;
};

int run_demo(const DemoArgs& a) {
    if (a.scenario == "shake_eval") {
        iothub::ShakeEvalOptions o;
        o.seed = a.seed;
        o.out_dir = a.out;
        o.threshold = a.threshold;
        if (!a.stages.empty()) {
            o.stages = iothub::parse_stages(a.stages);
        }
        return report(iothub::run_shake_eval(o).checks, o.out_dir);
    }
    if (a.scenario == "smart_city") {
        iothub::SmartCityOptions o;
        o.seed = a.seed;
        o.out_dir = a.out;
        o.weeks = a.weeks;
        return report(iothub::run_smart_city(o).checks, o.out_dir);
    }
    throw iothub::Error(iothub::Errc::unknown_scenario, "unknown scenario '" + a.scenario +
                                                            "' (expected shake_eval or smart_city)");
}

int generate_trace(const std::string& stages, std::uint64_t seed, const std::string& out) {
    const auto trace =
        iothub::generate_trace(stages.empty() ? iothub::evaluation_stages() : iothub::parse_stages(stages), seed);
    if (out.empty() || out == "-") {
        iothub::write_trace(std::cout, trace.samples);
    } else {
        iothub::save_trace(out, trace.samples);
    }
    std::cerr << trace.samples.size() << " samples, " << trace.shake_events.size() << " shake events\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IoT hub, meta-hub and demo runner"};
    app.require_subcommand(1);

    std::string hub_config;
    auto* hub = app.add_subcommand("hub", "IoT hub");
    hub->require_subcommand(1);
    hub->add_subcommand("serve", "serve the hub REST API")->add_option("--config", hub_config)->required();

    std::string metahub_config;
    auto* metahub = app.add_subcommand("metahub", "meta-hub catalog");
    metahub->require_subcommand(1);
    metahub->add_subcommand("serve", "serve the meta-hub REST API")
        ->add_option("--config", metahub_config)
        ->required();

    DemoArgs demo_args;
    auto* demo = app.add_subcommand("demo", "run a headless demo scenario");
    demo->add_option("scenario", demo_args.scenario, "shake_eval or smart_city")->required();
    demo->add_option("--out", demo_args.out, "output directory")->required();
    demo->add_option("--seed", demo_args.seed, "random seed");
    demo->add_option("--stages", demo_args.stages, "shake_eval trace, e.g. shake_every(30):180,rest:60,shake_fast:30");
    demo->add_option("--threshold", demo_args.threshold, "shake_eval force threshold");
    demo->add_option("--weeks", demo_args.weeks, "smart_city weeks of readings");

    std::string trace_stages;
    std::string trace_out;
    std::uint64_t trace_seed = 1;
    auto* trace = app.add_subcommand("trace", "accelerometer traces");
    trace->require_subcommand(1);
    auto* trace_gen = trace->add_subcommand("generate", "write a synthetic trace");
    trace_gen->add_option("--stages", trace_stages);
    trace_gen->add_option("--seed", trace_seed);
    trace_gen->add_option("--out", trace_out, "file, or - for stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (hub->parsed()) {
            return serve_hub(hub_config);
        }
        if (metahub->parsed()) {
            return serve_metahub(metahub_config);
        }
        if (demo->parsed()) {
            return run_demo(demo_args);
        }
        if (trace_gen->parsed()) {
            return generate_trace(trace_stages, trace_seed, trace_out);
        }
    } catch (const iothub::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kConfigError;
}
