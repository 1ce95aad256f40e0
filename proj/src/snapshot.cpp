#include "remem/snapshot.hpp"

#include <cstring>
#include <fstream>

#include "remem/errors.hpp"

namespace remem {

namespace {

constexpr char kMagic[4] = {'R', 'E', 'M', 'B'};

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32_le(out, bits);
}

float read_f32_le(std::ifstream& in) {
  std::uint32_t bits = read_u32_le(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot read " + path.string());
  return in;
}

nlohmann::json parse_line(const std::string& line,
                          const std::filesystem::path& file, std::size_t lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::SnapshotFormat,
          file.filename().string() + " line " + std::to_string(lineno) +
              ": " + e.what());
  }
}

}  // namespace

nlohmann::json scope_to_json(const TimeScope& scope) {
  nlohmann::json j;
  if (scope.kind == ScopeKind::Point) {
    j["point"] = render_instant(scope.point);
  } else {
    nlohmann::json iv;
    iv["start"] = scope.start ? nlohmann::json(render_instant(*scope.start))
                              : nlohmann::json(nullptr);
    iv["end"] = scope.end ? nlohmann::json(render_instant(*scope.end))
                          : nlohmann::json(nullptr);
    j["interval"] = std::move(iv);
  }
  return j;
}

TimeScope scope_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    raise(ErrorCode::SnapshotFormat, "scope must be a JSON object");
  }
  if (j.contains("point")) {
    return TimeScope::point_of(parse_instant(j["point"].get<std::string>()));
  }
  if (j.contains("interval")) {
    const nlohmann::json& iv = j["interval"];
    std::optional<TimeInstant> start, end;
    if (iv.contains("start") && !iv["start"].is_null()) {
      start = parse_instant(iv["start"].get<std::string>());
    }
    if (iv.contains("end") && !iv["end"].is_null()) {
      end = parse_instant(iv["end"].get<std::string>());
    }
    return TimeScope::interval_of(std::move(start), std::move(end));
  }
  raise(ErrorCode::SnapshotFormat, "scope object has neither point nor interval");
}

nlohmann::json optional_scope_to_json(const std::optional<TimeScope>& scope) {
  if (!scope) return nullptr;
  return scope_to_json(*scope);
}

std::optional<TimeScope> optional_scope_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return scope_from_json(j);
}

void save_snapshot(const MemoryGraph& graph, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  {
    nlohmann::json meta;
    meta["format_version"] = kSnapshotFormatVersion;
    const BuildConfig& cfg = graph.config();
    meta["build_config"] = {{"synonymy_threshold", cfg.synonymy_threshold},
                            {"extractor", cfg.extractor_tag},
                            {"embedding_provider", cfg.embedding_tag},
                            {"bm25_k1", cfg.bm25_k1},
                            {"bm25_b", cfg.bm25_b}};
    meta["counts"] = {{"gists", graph.gists().size()},
                      {"phrases", graph.phrases().size()},
                      {"relations", graph.relations().size()},
                      {"contexts", graph.contexts().size()},
                      {"synonyms", graph.synonyms().size()}};
    auto out = open_for_write(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }

  {
    auto out = open_for_write(dir / "gists.jsonl");
    for (const GistNode& g : graph.gists()) {
      nlohmann::json j;
      j["gist_id"] = g.id;
      j["text"] = g.text;
      j["scope"] = optional_scope_to_json(g.scope);
      j["source_chunk"] = g.source_chunk;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open_for_write(dir / "phrases.jsonl");
    for (const PhraseNode& p : graph.phrases()) {
      nlohmann::json j;
      j["phrase_id"] = p.id;
      j["name"] = p.name;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open_for_write(dir / "relations.jsonl");
    for (const RelationEdge& r : graph.relations()) {
      nlohmann::json j;
      j["edge_id"] = r.id;
      j["subject"] = r.subject;
      j["predicate"] = r.predicate;
      j["object"] = r.object;
      j["scope"] = optional_scope_to_json(r.scope);
      j["source_chunk"] = r.source_chunk;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open_for_write(dir / "contexts.jsonl");
    for (const ContextEdge& c : graph.contexts()) {
      nlohmann::json j;
      j["gist"] = c.gist;
      j["phrase"] = c.phrase;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open_for_write(dir / "synonyms.jsonl");
    for (const SynonymyEdge& s : graph.synonyms()) {
      nlohmann::json j;
      j["a"] = s.a;
      j["b"] = s.b;
      j["similarity"] = s.similarity;
      out << j.dump() << "\n";
    }
  }
  {
    auto out = open_for_write(dir / "embeddings.bin");
    out.write(kMagic, 4);
    std::size_t dim = graph.embedding_dimension();
    std::size_t rows =
        dim == 0 ? 0 : graph.gists().size() + graph.relations().size();
    write_u32_le(out, static_cast<std::uint32_t>(dim));
    write_u32_le(out, static_cast<std::uint32_t>(rows));
    for (float v : graph.gist_embedding_rows()) write_f32_le(out, v);
    for (float v : graph.fact_embedding_rows()) write_f32_le(out, v);
  }
}

MemoryGraph load_snapshot(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    raise(ErrorCode::Io, "snapshot directory not found: " + dir.string());
  }

  nlohmann::json meta;
  {
    auto in = open_for_read(dir / "meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::SnapshotFormat,
            std::string("meta.json is not valid JSON: ") + e.what());
    }
  }
  if (!meta.contains("format_version") ||
      !meta["format_version"].is_number_integer()) {
    raise(ErrorCode::SnapshotFormat, "meta.json is missing a format version");
  }
  int version = meta["format_version"].get<int>();
  if (version != kSnapshotFormatVersion) {
    raise(ErrorCode::SnapshotFormat,
          "unsupported snapshot format version " + std::to_string(version) +
              " (expected " + std::to_string(kSnapshotFormatVersion) + ")");
  }

  BuildConfig cfg;
  if (meta.contains("build_config")) {
    const nlohmann::json& bc = meta["build_config"];
    cfg.synonymy_threshold = bc.value("synonymy_threshold", 0.8);
    cfg.extractor_tag = bc.value("extractor", std::string("rule"));
    cfg.embedding_tag = bc.value("embedding_provider", std::string());
    cfg.bm25_k1 = bc.value("bm25_k1", 1.2);
    cfg.bm25_b = bc.value("bm25_b", 0.75);
  }

  MemoryGraph graph(cfg);

  auto for_each_line = [&](const char* name, auto&& fn) {
    auto in = open_for_read(dir / name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      fn(parse_line(line, dir / name, lineno), lineno);
    }
  };

  try {
    for_each_line("gists.jsonl", [&](const nlohmann::json& j, std::size_t) {
      GistId id = graph.add_gist(j.at("text").get<std::string>(),
                                 optional_scope_from_json(j.at("scope")),
                                 j.at("source_chunk").get<std::string>());
      if (id != j.at("gist_id").get<GistId>()) {
        raise(ErrorCode::SnapshotFormat, "gists.jsonl ids are not dense");
      }
    });
    for_each_line("phrases.jsonl", [&](const nlohmann::json& j, std::size_t) {
      PhraseId id = graph.upsert_phrase(j.at("name").get<std::string>());
      if (id != j.at("phrase_id").get<PhraseId>()) {
        raise(ErrorCode::SnapshotFormat,
              "phrases.jsonl ids are not dense or contain duplicates");
      }
    });
    for_each_line("relations.jsonl", [&](const nlohmann::json& j, std::size_t) {
      PhraseId subject = j.at("subject").get<PhraseId>();
      PhraseId object = j.at("object").get<PhraseId>();
      EdgeId id = graph.add_fact(graph.phrase(subject).name,
                                 j.at("predicate").get<std::string>(),
                                 graph.phrase(object).name,
                                 optional_scope_from_json(j.at("scope")),
                                 j.at("source_chunk").get<std::string>());
      if (id != j.at("edge_id").get<EdgeId>()) {
        raise(ErrorCode::SnapshotFormat, "relations.jsonl ids are not dense");
      }
      const RelationEdge& edge = graph.relation(id);
      if (edge.subject != subject || edge.object != object) {
        raise(ErrorCode::SnapshotFormat,
              "relations.jsonl endpoints disagree with phrases.jsonl");
      }
    });
    for_each_line("contexts.jsonl", [&](const nlohmann::json& j, std::size_t) {
      graph.bind_context({j.at("gist").get<GistId>()},
                         {j.at("phrase").get<PhraseId>()});
    });
    for_each_line("synonyms.jsonl", [&](const nlohmann::json& j, std::size_t) {
      graph.add_synonymy(j.at("a").get<GistId>(), j.at("b").get<GistId>(),
                         j.at("similarity").get<float>());
    });
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::SnapshotFormat,
          std::string("snapshot field error: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SnapshotFormat || e.code() == ErrorCode::Io) {
      throw;
    }
    raise(ErrorCode::SnapshotFormat,
          std::string("snapshot integrity error: ") + e.what());
  }

  {
    auto in = open_for_read(dir / "embeddings.bin");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
      raise(ErrorCode::SnapshotFormat, "embeddings.bin has a bad magic header");
    }
    std::uint32_t dim = read_u32_le(in);
    std::uint32_t rows = read_u32_le(in);
    if (!in) raise(ErrorCode::SnapshotFormat, "embeddings.bin header truncated");
    if (dim > 0) {
      std::size_t expected =
          graph.gists().size() + graph.relations().size();
      if (rows != expected) {
        raise(ErrorCode::SnapshotFormat,
              "embeddings.bin row count " + std::to_string(rows) +
                  " does not match graph contents (" +
                  std::to_string(expected) + ")");
      }
      std::vector<float> gist_rows(graph.gists().size() *
                                   static_cast<std::size_t>(dim));
      std::vector<float> fact_rows(graph.relations().size() *
                                   static_cast<std::size_t>(dim));
      for (float& v : gist_rows) v = read_f32_le(in);
      for (float& v : fact_rows) v = read_f32_le(in);
      if (!in) raise(ErrorCode::SnapshotFormat, "embeddings.bin truncated");
      graph.set_embeddings(dim, std::move(gist_rows), std::move(fact_rows));
    }
  }

  if (meta.contains("counts")) {
    const nlohmann::json& c = meta["counts"];
    auto check = [&](const char* key, std::size_t actual) {
      if (c.contains(key) && c[key].get<std::size_t>() != actual) {
        raise(ErrorCode::SnapshotFormat,
              std::string("meta.json count mismatch for ") + key);
      }
    };
    check("gists", graph.gists().size());
    check("phrases", graph.phrases().size());
    check("relations", graph.relations().size());
    check("contexts", graph.contexts().size());
    check("synonyms", graph.synonyms().size());
  }

  graph.freeze();
  return graph;
}

}  // namespace remem
