#pragma once

#include <memory>
#include <string>

#include "twb/error.hpp"
#include "twb/service.hpp"

namespace httplib {
class Server;
}

namespace twb {

int http_status_for(ErrorCode code) noexcept;

// Registers every /api route on the server. The service must outlive it.
void mount_api(httplib::Server& server, Service& service);

// Owns an httplib server bound to host:port. port 0 picks a free port.
class ApiServer {
 public:
  ApiServer(Service& service, std::string host = "127.0.0.1", int port = 0);
  ~ApiServer();

  int port() const { return port_; }
  // Blocks until stop() is called from another thread.
  void listen();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::string host_;
  int port_ = 0;
};

}  // namespace twb
