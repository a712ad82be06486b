#include "oasis/error.hpp"
#include "oasis/tide.hpp"

#include "httplib.h"

namespace oasis::tide {

HttpNoaaClient::HttpNoaaClient(HttpClientConfig config) : config_(std::move(config)) {}

std::string HttpNoaaClient::query(const std::string& station, const DateRange& range) const {
    httplib::Params params{{"station", station},
                           {"begin_date", format_yyyymmdd(range.begin)},
                           {"end_date", format_yyyymmdd(range.end)},
                           {"product", "predictions"},
                           {"interval", "hilo"},
                           {"datum", config_.datum},
                           {"units", "metric"},
                           {"time_zone", "gmt"},
                           {"format", "json"}};
    return config_.path + "?" + httplib::detail::params_to_query_str(params);
}

std::string HttpNoaaClient::fetch(const std::string& station, const DateRange& range) {
    const std::string target = query(station, range);
    const std::string where = "station " + station + " " + format_yyyymmdd(range.begin) + "-" + format_yyyymmdd(range.end);
    std::string last;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        httplib::Client client(std::string(config_.tls ? "https://" : "http://") + config_.host + ":" +
                               std::to_string(config_.port));
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        auto res = client.Get(target);
        if (res && res->status == 200) return res->body;
        last = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    }
    throw Error(ErrorCode::NetworkError, where + ": " + last);
}

}  // namespace oasis::tide
