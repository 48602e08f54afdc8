#include "sta/errors.hpp"
#include "sta/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <memory>

namespace sta {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw IoError("SHA-256 computation failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const fs::path& path) {
    return sha256_hex(read_text(path));
}

Json manifest_to_json(const Manifest& m) {
    return {{"format", "sta-manifest"},
            {"version", m.version},
            {"artifact_type", m.artifact_type},
            {"params", m.params},
            {"inputs", m.inputs},
            {"outputs", m.outputs}};
}

Manifest manifest_from_json(const Json& j, const fs::path& origin) {
    check_format(j, "sta-manifest", format_version::manifest, origin);
    try {
        Manifest m;
        m.version = j.at("version").get<int>();
        m.artifact_type = j.at("artifact_type").get<std::string>();
        m.params = j.at("params");
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        return m;
    } catch (const Json::exception& e) {
        throw IntegrityError(origin.string() + ": malformed manifest (" + e.what() + ")");
    }
}

void save_manifest(const fs::path& path, const Manifest& m) {
    write_json(path, manifest_to_json(m));
}

Manifest load_manifest(const fs::path& path) {
    return manifest_from_json(read_json(path), path);
}

void verify_outputs(const Manifest& m, const fs::path& dir) {
    for (const auto& [name, hash] : m.outputs) {
        const fs::path file = dir / name;
        if (!fs::exists(file)) {
            throw IntegrityError(file.string() + ": listed in the " + m.artifact_type + " manifest but missing");
        }
        if (sha256_file(file) != hash) {
            throw IntegrityError(file.string() + ": content hash does not match the " + m.artifact_type +
                                 " manifest (file modified or corrupted)");
        }
    }
}

}  // namespace sta
