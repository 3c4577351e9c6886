#include "core/log.hpp"
#include "service/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <iostream>

namespace {
httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}
} // namespace

int main(int argc, char** argv) {
    CLI::App app{"HTTP service for interactive drag editing"};
    std::string listen = "127.0.0.1:8080";
    std::string data_dir;
    std::string cors = "*";
    bool verbose = false;
    app.add_option("--listen", listen, "host:port to bind")->capture_default_str();
    app.add_option("--data-dir", data_dir, "persist sessions here and rehydrate them on start");
    app.add_option("--cors-origin", cors, "Access-Control-Allow-Origin value")->capture_default_str();
    app.add_flag("-v,--verbose", verbose, "log info messages");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (verbose) arapgs::log::set_min_level(arapgs::log::Level::Info);

    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        std::cerr << "error: --listen expects host:port\n";
        return 2;
    }
    const std::string host = listen.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
        std::cerr << "error: bad port in --listen\n";
        return 2;
    }

    arapgs::service::ServiceOptions options;
    if (!data_dir.empty()) options.data_dir = data_dir;
    options.cors_origin = cors;
    arapgs::service::Service service(options);
    httplib::Server server;
    server.set_payload_max_length(std::size_t{2} << 30);
    service.mount(server);

    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << host << ":" << port << " (" << service.session_count() << " stored session(s))\n";
    if (!server.listen(host, port)) {
        std::cerr << "error: cannot bind " << listen << "\n";
        return 3;
    }
    return 0;
}
