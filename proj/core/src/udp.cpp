#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "gpk/online_loop.hpp"

namespace gpk::online {

namespace {

sockaddr_in resolve(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw ConfigError("endpoint '" + endpoint + "' is not host:port");
  }
  const std::string host = endpoint.substr(0, colon);
  const std::string port = endpoint.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0 || !res) {
    throw ConfigError("cannot resolve endpoint '" + endpoint + "': " + ::gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

UdpEndpoint::UdpEndpoint(const std::string& local, const std::string& remote) {
  const sockaddr_in local_addr = resolve(local);
  const sockaddr_in remote_addr = resolve(remote);
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(std::string("socket(): ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&local_addr), sizeof(local_addr)) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw Error("cannot bind UDP endpoint " + local + ": " + reason);
  }
  const int flags = ::fcntl(fd_, F_GETFL, 0);
  ::fcntl(fd_, F_SETFL, flags | O_NONBLOCK);
  remote_addr_.resize(sizeof(sockaddr_in));
  std::memcpy(remote_addr_.data(), &remote_addr, sizeof(remote_addr));
}

UdpEndpoint::~UdpEndpoint() {
  if (fd_ >= 0) ::close(fd_);
}

bool UdpEndpoint::send(std::span<const std::uint8_t> datagram) {
  const auto n = ::sendto(fd_, datagram.data(), datagram.size(), MSG_DONTWAIT,
                          reinterpret_cast<const sockaddr*>(remote_addr_.data()),
                          static_cast<socklen_t>(remote_addr_.size()));
  return n == static_cast<ssize_t>(datagram.size());
}

std::optional<std::vector<std::uint8_t>> UdpEndpoint::try_receive() {
  std::vector<std::uint8_t> buf(65536);
  while (true) {
    const auto n = ::recv(fd_, buf.data(), buf.size(), MSG_DONTWAIT);
    if (n >= 0) {
      buf.resize(static_cast<std::size_t>(n));
      return buf;
    }
    // ICMP port-unreachable from an absent peer surfaces here; skip it.
    if (errno == ECONNREFUSED || errno == EINTR) continue;
    return std::nullopt;
  }
}

bool UdpEndpoint::wait_readable(int timeout_ms) const {
  pollfd p{fd_, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0 && (p.revents & POLLIN);
}

}  // namespace gpk::online
