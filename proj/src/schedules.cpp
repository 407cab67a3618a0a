#include "chord/schedules.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace chord {
namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

void MuSchedule::validate() const {
  switch (kind) {
    case ScheduleKind::constant:
      check_unit(value, "constant mu");
      break;
    case ScheduleKind::binary:
      check_unit(high, "binary high");
      check_unit(low, "binary low");
      if (switch_step < 0) {
        throw ConfigError("binary switch step must be >= 0");
      }
      break;
    case ScheduleKind::periodic:
      check_unit(high, "periodic high");
      check_unit(low, "periodic low");
      check_unit(duty, "periodic duty fraction");
      if (period < 1) {
        throw ConfigError("periodic period must be >= 1");
      }
      break;
    case ScheduleKind::decay:
      check_unit(start, "decay start");
      check_unit(end, "decay end");
      if (start < end) {
        throw ConfigError("decay start must be >= end");
      }
      if (decay_steps < 1) {
        throw ConfigError("decay steps must be >= 1");
      }
      break;
  }
}

double MuSchedule::max_value() const {
  switch (kind) {
    case ScheduleKind::constant:
      return value;
    case ScheduleKind::binary:
      return std::max(high, low);
    case ScheduleKind::periodic:
      return std::max(high, low);
    case ScheduleKind::decay:
      return start;
  }
  return 0.0;
}

double mu_at(const MuSchedule& schedule, long step) {
  if (step < 0) {
    throw std::invalid_argument("schedule step must be >= 0");
  }
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return schedule.value;
    case ScheduleKind::binary:
      return step < schedule.switch_step ? schedule.high : schedule.low;
    case ScheduleKind::periodic: {
      const long phase = step % schedule.period;
      const double frac = static_cast<double>(phase) / static_cast<double>(schedule.period);
      return frac < schedule.duty ? schedule.high : schedule.low;
    }
    case ScheduleKind::decay: {
      if (step >= schedule.decay_steps) {
        return schedule.end;
      }
      const double t = static_cast<double>(step) / static_cast<double>(schedule.decay_steps);
      if (schedule.shape == DecayShape::linear) {
        return schedule.start + (schedule.end - schedule.start) * t;
      }
      const double w = 0.5 * (1.0 - std::cos(M_PI * t));
      return schedule.start + (schedule.end - schedule.start) * w;
    }
  }
  throw std::logic_error("bad schedule kind");
}

namespace {

std::vector<std::string> split_colon(const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = spec.find(':', start);
    if (colon == std::string::npos) {
      parts.push_back(spec.substr(start));
      break;
    }
    parts.push_back(spec.substr(start, colon - start));
    start = colon + 1;
  }
  return parts;
}

// Field offsets let parse errors point at the byte where the bad field starts.
std::size_t field_offset(const std::vector<std::string>& parts, std::size_t idx) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < idx; ++i) {
    off += parts[i].size() + 1;
  }
  return off;
}

double parse_real(const std::vector<std::string>& parts, std::size_t idx,
                  const std::string& spec) {
  try {
    std::size_t used = 0;
    const double v = std::stod(parts.at(idx), &used);
    if (used != parts[idx].size()) {
      throw std::invalid_argument("trailing garbage");
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad schedule field '" + (idx < parts.size() ? parts[idx] : "") +
                      "' at position " + std::to_string(field_offset(parts, idx)) + " in '" +
                      spec + "'");
  }
}

long parse_int(const std::vector<std::string>& parts, std::size_t idx, const std::string& spec) {
  try {
    std::size_t used = 0;
    const long v = std::stol(parts.at(idx), &used);
    if (used != parts[idx].size()) {
      throw std::invalid_argument("trailing garbage");
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad schedule field '" + (idx < parts.size() ? parts[idx] : "") +
                      "' at position " + std::to_string(field_offset(parts, idx)) + " in '" +
                      spec + "'");
  }
}

void need_fields(const std::vector<std::string>& parts, std::size_t n, const std::string& spec) {
  if (parts.size() != n) {
    throw ConfigError("schedule '" + spec + "' expects " + std::to_string(n - 1) +
                      " parameters, got " + std::to_string(parts.size() - 1));
  }
}

}  // namespace

MuSchedule parse_schedule(const std::string& spec) {
  const std::vector<std::string> parts = split_colon(spec);
  MuSchedule s;
  const std::string& kind = parts[0];
  if (kind == "constant") {
    need_fields(parts, 2, spec);
    s.kind = ScheduleKind::constant;
    s.value = parse_real(parts, 1, spec);
  } else if (kind == "binary") {
    need_fields(parts, 4, spec);
    s.kind = ScheduleKind::binary;
    s.switch_step = parse_int(parts, 1, spec);
    s.high = parse_real(parts, 2, spec);
    s.low = parse_real(parts, 3, spec);
  } else if (kind == "periodic") {
    need_fields(parts, 5, spec);
    s.kind = ScheduleKind::periodic;
    s.period = parse_int(parts, 1, spec);
    s.duty = parse_real(parts, 2, spec);
    s.high = parse_real(parts, 3, spec);
    s.low = parse_real(parts, 4, spec);
  } else if (kind == "decay") {
    need_fields(parts, 5, spec);
    s.kind = ScheduleKind::decay;
    s.start = parse_real(parts, 1, spec);
    s.end = parse_real(parts, 2, spec);
    s.decay_steps = parse_int(parts, 3, spec);
    if (parts[4] == "linear") {
      s.shape = DecayShape::linear;
    } else if (parts[4] == "cosine") {
      s.shape = DecayShape::cosine;
    } else {
      throw ConfigError("bad decay shape '" + parts[4] + "' at position " +
                        std::to_string(field_offset(parts, 4)) + " in '" + spec + "'");
    }
  } else {
    throw ConfigError("unknown schedule kind '" + kind + "' at position 0 in '" + spec + "'");
  }
  s.validate();
  return s;
}

std::string format_schedule(const MuSchedule& s) {
  std::ostringstream out;
  auto num = [](double v) {
    std::ostringstream o;
    o << v;
    return o.str();
  };
  switch (s.kind) {
    case ScheduleKind::constant:
      out << "constant:" << num(s.value);
      break;
    case ScheduleKind::binary:
      out << "binary:" << s.switch_step << ':' << num(s.high) << ':' << num(s.low);
      break;
    case ScheduleKind::periodic:
      out << "periodic:" << s.period << ':' << num(s.duty) << ':' << num(s.high) << ':'
          << num(s.low);
      break;
    case ScheduleKind::decay:
      out << "decay:" << num(s.start) << ':' << num(s.end) << ':' << s.decay_steps << ':'
          << (s.shape == DecayShape::linear ? "linear" : "cosine");
      break;
  }
  return out.str();
}

}  // namespace chord
