#include "scope/envproto.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <string>

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "scope/error.hpp"

namespace scope::proto {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string errno_text(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

std::pair<std::string, std::string> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) return {"", address};
  return {address.substr(0, colon), address.substr(colon + 1)};
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction current {};
    if (sigaction(SIGPIPE, nullptr, &current) == 0 && current.sa_handler == SIG_DFL) {
      std::signal(SIGPIPE, SIG_IGN);
    }
    return true;
  }();
  (void)done;
}

std::vector<std::uint8_t> response(double reward, std::uint8_t status,
                                   std::span<const std::uint8_t> frame) {
  std::vector<std::uint8_t> out;
  out.reserve(9 + frame.size());
  put_u64(out, std::bit_cast<std::uint64_t>(reward));
  out.push_back(status);
  out.insert(out.end(), frame.begin(), frame.end());
  return out;
}

void send_error(ByteStream& transport, const std::string& message) {
  const std::string text = message.substr(0, 0xFFFF);
  std::vector<std::uint8_t> out = response(0.0, kStatusError, {});
  put_u16(out, static_cast<std::uint16_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  try {
    transport.write_all(out);
  } catch (const TransportError&) {
    // Peer already gone; nothing left to report to.
  }
}

}  // namespace

std::array<std::uint8_t, kHandshakeSize> encode_handshake(const Handshake& h) {
  std::vector<std::uint8_t> v(kMagic.begin(), kMagic.end());
  put_u16(v, h.height);
  put_u16(v, h.width);
  v.push_back(h.action_count);
  std::array<std::uint8_t, kHandshakeSize> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

Handshake decode_handshake(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kHandshakeSize) {
    throw ProtocolError("handshake must be " + std::to_string(kHandshakeSize) + " bytes");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ProtocolError("bad handshake magic (expected \"SCP1\")");
  }
  Handshake h{get_u16(bytes.data() + 4), get_u16(bytes.data() + 6), bytes[8]};
  if (h.height == 0 || h.width == 0) throw ProtocolError("handshake announces an empty frame");
  if (static_cast<std::size_t>(h.height) * h.width > kMaxFramePixels) {
    throw ProtocolError("handshake frame size " + std::to_string(h.height) + "x" +
                        std::to_string(h.width) + " exceeds the protocol limit");
  }
  if (h.action_count == 0) throw ProtocolError("handshake announces zero actions");
  return h;
}

// ---------------------------------------------------------------------------
// Transports

void ByteStream::read_exact(std::span<std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const std::size_t n = read_some(bytes.subspan(done));
    if (n == 0) {
      throw TransportError("unexpected end of stream after " + std::to_string(done) + " of " +
                           std::to_string(bytes.size()) + " bytes");
    }
    done += n;
  }
}

FdStream::FdStream(int read_fd, int write_fd, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

FdStream::~FdStream() {
  if (!owns_) return;
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

void FdStream::write_all(std::span<const std::uint8_t> bytes) {
  if (write_fd_ < 0) throw TransportError("stream is closed for writing");
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t n = ::send(write_fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("write failed"));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::size_t FdStream::read_some(std::span<std::uint8_t> bytes) {
  if (read_fd_ < 0) return 0;
  for (;;) {
    const ssize_t n = ::read(read_fd_, bytes.data(), bytes.size());
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw TransportError(errno_text("read failed"));
  }
}

void FdStream::close_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else if (owns_) {
    ::close(write_fd_);
  }
  write_fd_ = -1;
}

std::pair<std::unique_ptr<FdStream>, std::unique_ptr<FdStream>> stream_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw TransportError(errno_text("socketpair failed"));
  }
  return {std::make_unique<FdStream>(fds[0], fds[0], true),
          std::make_unique<FdStream>(fds[1], fds[1], true)};
}

std::unique_ptr<FdStream> tcp_connect(const std::string& address) {
  auto [host, port] = split_host_port(address);
  if (host.empty()) host = "127.0.0.1";
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw TransportError("cannot resolve " + address + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw TransportError(errno_text("cannot connect to " + address));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<FdStream>(fd, fd, true);
}

TcpListener::TcpListener(const std::string& address) {
  auto [host, port] = split_host_port(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  const char* node = host.empty() ? nullptr : host.c_str();
  if (const int rc = ::getaddrinfo(node, port.c_str(), &hints, &found); rc != 0) {
    throw TransportError("cannot resolve " + address + ": " + ::gai_strerror(rc));
  }
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd_ < 0) continue;
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd_, 16) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(found);
  if (fd_ < 0) throw TransportError(errno_text("cannot listen on " + address));

  sockaddr_storage bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  if (bound.ss_family == AF_INET) {
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  } else if (bound.ss_family == AF_INET6) {
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
  }
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<FdStream> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<FdStream>(fd, fd, true);
    }
    if (errno != EINTR) throw TransportError(errno_text("accept failed"));
  }
}

ChildProcess::ChildProcess(const std::string& command) {
  ignore_sigpipe_once();
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError(errno_text("pipe failed"));
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError(errno_text("pipe failed"));
  }
  pid_ = ::fork();
  if (pid_ < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw TransportError(errno_text("fork failed"));
  }
  if (pid_ == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  stream_ = std::make_unique<FdStream>(from_child[0], to_child[1], true);
}

ChildProcess::~ChildProcess() {
  if (!reaped_) wait();
}

void ChildProcess::write_all(std::span<const std::uint8_t> bytes) {
  if (!stream_) throw TransportError("child process stream is closed");
  stream_->write_all(bytes);
}

std::size_t ChildProcess::read_some(std::span<std::uint8_t> bytes) {
  if (!stream_) return 0;
  return stream_->read_some(bytes);
}

int ChildProcess::wait() {
  if (reaped_) return status_;
  stream_.reset();
  while (::waitpid(pid_, &status_, 0) < 0 && errno == EINTR) {
  }
  reaped_ = true;
  return status_;
}

// ---------------------------------------------------------------------------
// Client

RemoteEnvironment::RemoteEnvironment(std::unique_ptr<ByteStream> transport, Handshake handshake)
    : transport_(std::move(transport)),
      handshake_(handshake),
      frame_buffer_(static_cast<std::size_t>(handshake.height) * handshake.width) {}

RemoteEnvironment::~RemoteEnvironment() { close(); }

std::unique_ptr<RemoteEnvironment> connect(std::unique_ptr<ByteStream> transport) {
  if (!transport) throw InvalidArgument("connect() needs a transport");
  std::array<std::uint8_t, kHandshakeSize> bytes{};
  transport->read_exact(bytes);
  const Handshake h = decode_handshake(bytes);
  return std::unique_ptr<RemoteEnvironment>(new RemoteEnvironment(std::move(transport), h));
}

void RemoteEnvironment::close() {
  if (!transport_) return;
  if (usable_) {
    const std::uint8_t op = static_cast<std::uint8_t>(Opcode::Close);
    try {
      transport_->write_all({&op, 1});
    } catch (const TransportError&) {
      // Server already gone.
    }
  }
  usable_ = false;
  transport_.reset();
}

StepResult RemoteEnvironment::exchange(std::span<const std::uint8_t> request) {
  if (!usable_) throw TransportError("connection is no longer usable");
  try {
    transport_->write_all(request);
    std::array<std::uint8_t, 9> head{};
    transport_->read_exact(head);
    const double reward = std::bit_cast<double>(get_u64(head.data()));
    const std::uint8_t status = head[8];
    if (status == kStatusError) {
      std::array<std::uint8_t, 2> len{};
      transport_->read_exact(len);
      std::string message(get_u16(len.data()), '\0');
      transport_->read_exact(std::span(reinterpret_cast<std::uint8_t*>(message.data()), message.size()));
      usable_ = false;
      throw ProtocolError("server rejected request: " + message);
    }
    if (status != kStatusRunning && status != kStatusTerminated) {
      usable_ = false;
      throw ProtocolError("invalid response status byte " + std::to_string(status));
    }
    transport_->read_exact(frame_buffer_);
    return {Frame::from_gray8(handshake_.height, handshake_.width, frame_buffer_), reward,
            status == kStatusTerminated};
  } catch (const TransportError&) {
    usable_ = false;
    throw;
  }
}

Frame RemoteEnvironment::reset(std::uint64_t seed) {
  std::vector<std::uint8_t> request{static_cast<std::uint8_t>(Opcode::Reset)};
  put_u64(request, seed);
  return exchange(request).frame;
}

StepResult RemoteEnvironment::step(int action) {
  if (action < 0 || action >= handshake_.action_count) {
    throw InvalidArgument("action " + std::to_string(action) + " outside [0, " +
                          std::to_string(handshake_.action_count) + ")");
  }
  const std::array<std::uint8_t, 2> request{static_cast<std::uint8_t>(Opcode::Step),
                                            static_cast<std::uint8_t>(action)};
  return exchange(request);
}

// ---------------------------------------------------------------------------
// Server

void serve(std::unique_ptr<Environment> env, ByteStream& transport) {
  if (!env) throw InvalidArgument("serve() needs an environment");
  if (env->height() < 1 || env->height() > 0xFFFF || env->width() < 1 || env->width() > 0xFFFF ||
      env->action_count() < 1 || env->action_count() > 0xFF) {
    throw ProtocolError("environment dimensions do not fit the handshake fields");
  }
  const Handshake h{static_cast<std::uint16_t>(env->height()),
                    static_cast<std::uint16_t>(env->width()),
                    static_cast<std::uint8_t>(env->action_count())};
  transport.write_all(encode_handshake(h));

  auto reply = [&](double reward, bool terminated, const Frame& frame) {
    const std::vector<std::uint8_t> bytes = to_gray8(frame);
    if (frame.height() != h.height || frame.width() != h.width) {
      throw ProtocolError("environment produced a frame that differs from the handshake size");
    }
    transport.write_all(response(reward, terminated ? kStatusTerminated : kStatusRunning, bytes));
  };

  try {
    for (;;) {
      std::uint8_t op = 0;
      if (transport.read_some({&op, 1}) == 0) return;  // client hung up
      switch (static_cast<Opcode>(op)) {
        case Opcode::Reset: {
          std::array<std::uint8_t, 8> seed{};
          transport.read_exact(seed);
          const Frame frame = env->reset(get_u64(seed.data()));
          reply(0.0, false, frame);
          break;
        }
        case Opcode::Step: {
          std::uint8_t action = 0;
          transport.read_exact({&action, 1});
          const StepResult r = env->step(action);
          reply(r.reward, r.terminated, r.frame);
          break;
        }
        case Opcode::Close:
          return;
        default: {
          char hex[8];
          std::snprintf(hex, sizeof(hex), "0x%02X", op);
          send_error(transport, std::string("unknown opcode ") + hex);
          return;
        }
      }
    }
  } catch (const TransportError&) {
    return;
  } catch (const std::exception& e) {
    send_error(transport, e.what());
  }
}

namespace {

bool is_host_port(const std::string& s) {
  const auto colon = s.find(':');
  return colon != std::string::npos && colon == s.rfind(':') && colon + 1 < s.size() &&
         s.find_first_not_of("0123456789", colon + 1) == std::string::npos;
}

std::string host_port_part(const std::string& address) {
  return address.rfind("tcp:", 0) == 0 ? address.substr(4) : address;
}

}  // namespace

void validate_address(const std::string& address) {
  if (address.rfind("exec:", 0) == 0) {
    if (address.size() == 5) throw ConfigError("exec: address needs a command");
    return;
  }
  if (!is_host_port(host_port_part(address))) {
    throw ConfigError("unrecognized environment address \"" + address +
                      "\" (expected tcp:HOST:PORT, HOST:PORT or exec:COMMAND)");
  }
}

std::unique_ptr<ByteStream> open_transport(const std::string& address) {
  validate_address(address);
  if (address.rfind("exec:", 0) == 0) return std::make_unique<ChildProcess>(address.substr(5));
  return tcp_connect(host_port_part(address));
}

}  // namespace scope::proto
