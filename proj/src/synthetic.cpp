#include <cassert>
#include <map>
#include <sstream>

#include "jitterlab/dataset.hpp"
#include "jitterlab/rng.hpp"

namespace jitterlab {

namespace {

using TokenSeq = std::vector<std::string>;

TokenSeq toks(const std::string& s) {
  TokenSeq out;
  std::istringstream is(s);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

std::vector<TokenSeq> pool(std::initializer_list<const char*> phrases) {
  std::vector<TokenSeq> out;
  for (const char* p : phrases) out.push_back(toks(p));
  return out;
}

// Filler pools, keyed by name. "shared_*" pools feed the ambiguous templates.
const std::map<std::string, std::vector<TokenSeq>>& pools() {
  static const std::map<std::string, std::vector<TokenSeq>> p = {
      {"location", pool({"boston", "denver", "chicago", "miami", "seattle", "new york",
                         "lake tahoe", "sierra mountains"})},
      {"date_time", pool({"today", "tomorrow", "tonight", "this afternoon", "this weekend",
                          "next friday", "at noon", "at 7 pm"})},
      {"weather_attribute", pool({"rain", "snow", "wind", "fog", "hail"})},
      {"alarm_name", pool({"workout", "meeting", "wakeup", "yoga"})},
      {"artist", pool({"adele", "coldplay", "drake", "beyonce", "the beatles"})},
      {"song", pool({"yesterday", "hello", "believer", "thunder", "stay"})},
      {"contact", pool({"mom", "dad", "alex", "jordan", "sam", "my boss"})},
      {"message_body", pool({"running late", "on my way", "call me back", "see you soon"})},
      {"todo", pool({"buy milk", "water the plants", "pay rent", "walk the dog"})},
      {"duration", pool({"ten minutes", "one hour", "five minutes", "half an hour"})},
      {"event_type", pool({"concert", "festival", "game", "parade"})},
      {"shared_time", pool({"tonight", "tomorrow", "at 7 pm"})},
      {"shared_person", pool({"mom", "alex", "sam"})},
      {"shared_duration", pool({"ten minutes", "one hour"})},
      {"shared_place", pool({"boston", "new york", "chicago"})},
  };
  return p;
}

// Pattern items: literal tokens, or "{spec}" where spec is one of
//   pool                -> slot labeled `pool`, filler drawn from `pool`
//   label:pool          -> slot labeled `label`
//   labelA|labelB:pool  -> slot label depends on the chosen variant
//   label:@venue_event  -> destination slot wrapping a nested get_event
struct TemplateItem {
  bool is_slot = false;
  std::string literal;
  std::string label_a;  // labels for variant A / B (equal when unambiguous)
  std::string label_b;
  std::string pool_name;
};

struct Template {
  std::string intent_a;
  std::string intent_b;  // empty when unambiguous
  std::vector<TemplateItem> items;
};

Template make_template(const std::string& intent_a, const std::string& intent_b,
                       const std::string& pattern) {
  Template t;
  t.intent_a = intent_a;
  t.intent_b = intent_b;
  for (const std::string& tok : toks(pattern)) {
    TemplateItem item;
    if (tok.size() >= 2 && tok.front() == '{' && tok.back() == '}') {
      item.is_slot = true;
      std::string spec = tok.substr(1, tok.size() - 2);
      size_t colon = spec.find(':');
      std::string labels = (colon == std::string::npos) ? spec : spec.substr(0, colon);
      item.pool_name = (colon == std::string::npos) ? spec : spec.substr(colon + 1);
      size_t bar = labels.find('|');
      item.label_a = (bar == std::string::npos) ? labels : labels.substr(0, bar);
      item.label_b = (bar == std::string::npos) ? labels : labels.substr(bar + 1);
    } else {
      item.literal = tok;
    }
    t.items.push_back(std::move(item));
  }
  return t;
}

const std::vector<Template>& plain_templates() {
  static const std::vector<Template> ts = {
      make_template("get_weather", "", "what is the weather in {location} {date_time}"),
      make_template("get_weather", "", "is there {weather_attribute} in {location}"),
      make_template("get_weather", "", "do i need an umbrella {date_time}"),
      make_template("create_alarm", "", "set an alarm for {date_time}"),
      make_template("create_alarm", "", "wake me up {date_time}"),
      make_template("create_alarm", "", "create a {alarm_name} alarm {date_time}"),
      make_template("cancel_alarm", "", "cancel my {alarm_name} alarm"),
      make_template("cancel_alarm", "", "turn off the alarm {date_time}"),
      make_template("play_music", "", "play {song} by {artist}"),
      make_template("play_music", "", "put on some {artist}"),
      make_template("play_music", "", "i want to hear {song}"),
      make_template("send_message", "", "text {recipient:contact} {message_body}"),
      make_template("send_message", "", "send a message to {recipient:contact} saying {message_body}"),
      make_template("create_reminder", "", "remind me to {todo} {date_time}"),
      make_template("create_reminder", "", "set a reminder to {todo}"),
      make_template("get_directions", "", "directions to {destination:location}"),
      make_template("get_directions", "", "how do i get to {destination:location} from {location}"),
      make_template("get_directions", "", "how do i get to {destination:@venue_event}"),
      make_template("create_timer", "", "start a timer for {duration}"),
      make_template("create_timer", "", "set a {duration} timer"),
      make_template("make_call", "", "call {contact} right now"),
      make_template("make_call", "", "dial {contact}"),
      make_template("get_event", "", "any {event_type} in {location} {date_time}"),
      make_template("get_event", "", "what events are happening in {location}"),
  };
  return ts;
}

// Surface forms two distinct intents can both generate. Variant A or B is
// picked 50/50, so each surface recurs in a large corpus under both intents.
const std::vector<Template>& ambiguous_templates() {
  static const std::vector<Template> ts = {
      make_template("create_reminder", "create_alarm", "remind me at {date_time:shared_time}"),
      make_template("make_call", "send_message",
                    "get in touch with {contact|recipient:shared_person}"),
      make_template("create_timer", "create_alarm", "set one for {duration|date_time:shared_duration}"),
      make_template("get_event", "get_weather",
                    "anything in {location:shared_place} {date_time:shared_time}"),
  };
  return ts;
}

Example instantiate(const Template& t, bool variant_b, Rng& rng, int64_t id) {
  Example ex;
  ex.id = id;
  ParseNode root;
  root.kind = NodeKind::Intent;
  root.label = variant_b ? t.intent_b : t.intent_a;

  for (const auto& item : t.items) {
    if (!item.is_slot) {
      ex.utterance.push_back(item.literal);
      ParseItem pi;
      pi.token = item.literal;
      root.children.push_back(std::move(pi));
      continue;
    }
    const std::string& label = variant_b ? item.label_b : item.label_a;
    ParseNode slot;
    slot.kind = NodeKind::Slot;
    slot.label = label;
    if (item.pool_name == "@venue_event") {
      // "the <event_type>" parsed as a destination wrapping a nested intent.
      const auto& fillers = pools().at("event_type");
      const TokenSeq& f = fillers[rng.uniform_int(static_cast<int>(fillers.size()))];
      ex.utterance.push_back("the");
      ParseItem the_tok;
      the_tok.token = "the";
      slot.children.push_back(std::move(the_tok));
      ParseNode nested;
      nested.kind = NodeKind::Intent;
      nested.label = "get_event";
      ParseNode etype;
      etype.kind = NodeKind::Slot;
      etype.label = "event_type";
      for (const auto& w : f) {
        ex.utterance.push_back(w);
        ParseItem pi;
        pi.token = w;
        etype.children.push_back(std::move(pi));
      }
      ParseItem etype_item;
      etype_item.node.push_back(std::move(etype));
      nested.children.push_back(std::move(etype_item));
      ParseItem nested_item;
      nested_item.node.push_back(std::move(nested));
      slot.children.push_back(std::move(nested_item));
    } else {
      const auto& fillers = pools().at(item.pool_name);
      const TokenSeq& f = fillers[rng.uniform_int(static_cast<int>(fillers.size()))];
      for (const auto& w : f) {
        ex.utterance.push_back(w);
        ParseItem pi;
        pi.token = w;
        slot.children.push_back(std::move(pi));
      }
    }
    ParseItem slot_item;
    slot_item.node.push_back(std::move(slot));
    root.children.push_back(std::move(slot_item));
  }

  ex.gold.root = std::move(root);
  ex.gold.source_tokens = ex.utterance;
  ex.target_text = serialize_tree(ex.gold);
  return ex;
}

}  // namespace

Corpus generate_synthetic(uint64_t grammar_seed, int n, double ambiguity) {
  if (n < 1) throw DataError("synthetic corpus needs n >= 1");
  if (ambiguity < 0.0 || ambiguity > 1.0) throw DataError("ambiguity must be in [0,1]");

  Rng rng(derive_seed(grammar_seed, 0xDA7AULL));
  const auto& plain = plain_templates();
  const auto& amb = ambiguous_templates();

  Corpus c;
  c.split = Split::Train;
  c.examples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() < ambiguity) {
      const Template& t = amb[rng.uniform_int(static_cast<int>(amb.size()))];
      bool variant_b = rng.uniform() < 0.5;
      c.examples.push_back(instantiate(t, variant_b, rng, i));
    } else {
      const Template& t = plain[rng.uniform_int(static_cast<int>(plain.size()))];
      c.examples.push_back(instantiate(t, false, rng, i));
    }
  }
  return c;
}

}  // namespace jitterlab
