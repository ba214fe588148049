#pragma once

#include <atomic>
#include <chrono>
#include <thread>

#include "knxsafe/udp.hpp"

namespace knxsafe::testing {

/// A bus served over loopback UDP by a background thread.
struct Served {
  sim::SimBus bus;
  udp::BusEndpoint endpoint{bus, {"127.0.0.1", 0}};
  std::atomic<bool> stop{false};
  std::thread pump{[this] {
    while (!stop) endpoint.poll(std::chrono::milliseconds(5));
  }};

  ~Served() {
    stop = true;
    pump.join();
  }

  udp::Endpoint where() const { return {"127.0.0.1", endpoint.port()}; }

  template <class Pred>
  bool wait_for(Pred p) const {
    for (int i = 0; i < 400; ++i) {
      if (p()) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return p();
  }
};

/// Polls until nothing has arrived for a little while.
inline void settle(udp::BusClient& c) {
  int quiet = 0;
  while (quiet < 3) quiet = c.poll(std::chrono::milliseconds(30)) == 0 ? quiet + 1 : 0;
}

}  // namespace knxsafe::testing
