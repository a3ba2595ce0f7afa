#include "cli.hpp"

#include "ctrace/bizlog.hpp"
#include "ctrace/certificates.hpp"
#include "ctrace/contactlog.hpp"
#include "ctrace/crypto.hpp"
#include "ctrace/identity.hpp"
#include "ctrace/notify.hpp"
#include "ctrace/registry.hpp"
#include "ctrace/sim.hpp"

#include <CLI11.hpp>
#include <sodium.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <pthread.h>
#include <thread>

namespace ctrace::cli {

namespace {

constexpr int kOk = 0;
constexpr int kRejected = 1;
constexpr int kUsage = 2;

using Action = std::function<int()>;

std::unique_ptr<ByteTransform> log_transform(const std::string& passphrase)
{
    if (passphrase.empty())
        return std::make_unique<IdentityTransform>();
    return std::make_unique<PassphraseTransform>(passphrase);
}

std::string read_single_line(const std::string& path)
{
    for (auto& l : read_lines(path))
        if (!l.empty())
            return l;
    throw_parse_error(path + ": empty file");
}

CertificateOfInfection read_certificate(const std::string& path)
{
    std::vector<std::string> lines;
    for (auto& l : read_lines(path))
        if (!l.empty())
            lines.push_back(l);
    if (lines.size() != 2)
        throw_parse_error(path + ": expected a cert| line and a sig| line");
    return parse_certificate(lines[0], lines[1]);
}

// labkey|<lab_id>|ed25519|<base64 secret key>
LabIdentity read_lab_key(const std::string& path)
{
    auto f = split(read_single_line(path), '|');
    if (f.size() != 4 || f[0] != "labkey" || f[2] != crypto::kSignatureScheme)
        throw_parse_error(path + ": not a lab key file");
    crypto::SecretKey secret{base64_decode(f[3])};
    if (secret.bytes.size() != crypto_sign_SECRETKEYBYTES)
        throw_parse_error(path + ": bad key length");
    auto pub = secret.public_key();
    return LabIdentity{f[1], crypto::KeyPair{std::move(secret), std::move(pub)}};
}

LabDirectory read_directory(const std::string& path)
{
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::IoError, path + ": no such file");
    return parse_directory(read_lines(path));
}

// --- pid -------------------------------------------------------------------

void add_pid(CLI::App& app, std::ostream& out, Action& action)
{
    auto* pid = app.add_subcommand("pid", "Generate or prove pseudo-IDs");
    pid->require_subcommand(1);

    auto* random = pid->add_subcommand("random", "Print a random PID");
    auto seed = std::make_shared<std::optional<std::uint64_t>>();
    random->add_option("--seed", *seed, "Deterministic seed");
    random->callback([&, seed] {
        action = [&out, seed] {
            std::uint64_t s = 0;
            if (*seed)
                s = **seed;
            else
                randombytes_buf(&s, sizeof s);
            out << generate_random_pid(s).str() << '\n';
            return kOk;
        };
    });

    struct TrustedArgs {
        std::string name, phrase, out_path;
    };
    auto t = std::make_shared<TrustedArgs>();
    auto* trusted = pid->add_subcommand("trusted", "Derive a PID from personal data and a secret phrase");
    trusted->add_option("--name", t->name)->required();
    trusted->add_option("--phrase", t->phrase)->required();
    trusted->add_option("--out", t->out_path, "Write the commitment record here");
    trusted->callback([&, t] {
        action = [&out, t] {
            auto c = generate_trusted_pid(t->name, t->phrase);
            if (!t->out_path.empty())
                write_lines(t->out_path, {format_commitment_line(c)});
            out << c.pid.str() << '\n';
            return kOk;
        };
    });

    struct ProveArgs {
        std::string name, phrase, pid;
    };
    auto p = std::make_shared<ProveArgs>();
    auto* prove = pid->add_subcommand("prove", "Check ownership of a trusted PID");
    prove->add_option("--name", p->name)->required();
    prove->add_option("--phrase", p->phrase)->required();
    prove->add_option("--pid", p->pid)->required();
    prove->callback([&, p] {
        action = [&out, p] {
            const bool owned = prove_pid_ownership(p->name, p->phrase, Pid(p->pid));
            out << (owned ? "OWNED" : "NOT-OWNED") << '\n';
            return owned ? kOk : kRejected;
        };
    });
}

// --- sim -------------------------------------------------------------------

void add_sim(CLI::App& app, std::ostream& out, Action& action)
{
    struct Args {
        std::string scenario, trace;
    };
    auto a = std::make_shared<Args>();
    auto* sim = app.add_subcommand("sim", "Run a simulation scenario and print metrics");
    sim->add_option("--scenario", a->scenario)->required();
    sim->add_option("--trace", a->trace, "Write the event trace here");
    sim->callback([&, a] {
        action = [&out, a] {
            if (!std::filesystem::exists(a->scenario))
                throw Error(ErrorCode::IoError, a->scenario + ": no such file");
            auto result = sim::run_scenario(sim::load_scenario(a->scenario));
            if (!a->trace.empty())
                write_lines(a->trace, result.trace);
            for (const auto& l : sim::format_metrics(result.metrics))
                out << l << '\n';
            return kOk;
        };
    });
}

// --- cert ------------------------------------------------------------------

void add_cert(CLI::App& app, std::ostream& out, Action& action)
{
    auto* cert = app.add_subcommand("cert", "Laboratory keys and certificates of infection");
    cert->require_subcommand(1);

    struct KeygenArgs {
        std::string lab_id, key_out, directory;
        std::optional<std::uint64_t> seed;
    };
    auto k = std::make_shared<KeygenArgs>();
    auto* keygen = cert->add_subcommand("keygen", "Create a lab signing key and publish it in a directory file");
    keygen->add_option("--lab-id", k->lab_id)->required();
    keygen->add_option("--key-out", k->key_out)->required();
    keygen->add_option("--directory", k->directory, "Directory file to add the public key to");
    keygen->add_option("--seed", k->seed, "Deterministic key seed");
    keygen->callback([&, k] {
        action = [&out, k] {
            if (!is_valid_lab_id(k->lab_id))
                throw_parse_error("invalid lab id '" + k->lab_id + "'");
            crypto::KeyPair keys;
            if (k->seed) {
                Rng rng(*k->seed);
                std::array<unsigned char, 32> seed{};
                for (auto& b : seed)
                    b = static_cast<unsigned char>(rng.next());
                keys = crypto::keypair_from_seed(seed);
            } else {
                keys = crypto::generate_keypair();
            }
            if (!k->directory.empty()) {
                LabDirectory dir;
                if (std::filesystem::exists(k->directory))
                    dir = parse_directory(read_lines(k->directory));
                dir.add(k->lab_id, keys.pub);
                write_lines(k->directory, format_directory(dir));
            }
            write_lines(k->key_out, {"labkey|" + k->lab_id + "|" + std::string(crypto::kSignatureScheme) + "|" +
                                     base64_encode(keys.secret.bytes)});
            const std::string line = format_directory_line(k->lab_id, {std::string(crypto::kSignatureScheme), keys.pub});
            out << line << '\n';
            return kOk;
        };
    });

    struct IssueArgs {
        std::string key, test_date, infectious_from, out_path;
        std::vector<std::string> pids;
    };
    auto i = std::make_shared<IssueArgs>();
    auto* issue = cert->add_subcommand("issue", "Sign a certificate of infection");
    issue->add_option("--key", i->key)->required();
    issue->add_option("--pid", i->pids, "Covered PID (repeatable)")->required();
    issue->add_option("--test-date", i->test_date, "YYYY-MM-DD")->required();
    issue->add_option("--infectious-from", i->infectious_from, "YYYY-MM-DD")->required();
    issue->add_option("--out", i->out_path, "Certificate file; stdout only when omitted");
    issue->callback([&, i] {
        action = [&out, i] {
            auto lab = read_lab_key(i->key);
            std::vector<Pid> pids;
            for (const auto& p : i->pids)
                pids.emplace_back(p);
            auto c = issue_certificate(lab, std::move(pids), Date::parse(i->test_date), Date::parse(i->infectious_from));
            auto lines = format_certificate(c);
            if (!i->out_path.empty())
                write_lines(i->out_path, lines);
            for (const auto& l : lines)
                out << l << '\n';
            return kOk;
        };
    });

    struct VerifyArgs {
        std::string cert, directory;
    };
    auto v = std::make_shared<VerifyArgs>();
    auto* verify = cert->add_subcommand("verify", "Check a certificate against the lab directory");
    verify->add_option("--cert", v->cert)->required();
    verify->add_option("--directory", v->directory)->required();
    verify->callback([&, v] {
        action = [&out, v] {
            std::vector<std::string> lines;
            for (auto& l : read_lines(v->cert))
                if (!l.empty())
                    lines.push_back(l);
            if (lines.size() != 2 || lines[1].rfind("sig|", 0) != 0)
                throw_parse_error(v->cert + ": expected a cert| line and a sig| line");
            // Verify the bytes as stored, so any edit to the payload is caught.
            const auto status =
                verify_signed_payload(lines[0], base64_decode(lines[1].substr(4)), read_directory(v->directory));
            out << to_string(status) << '\n';
            return status == CertificateStatus::Verified ? kOk : kRejected;
        };
    });
}

// --- notify ----------------------------------------------------------------

void add_notify(CLI::App& app, std::ostream& out, Action& action)
{
    auto* notify = app.add_subcommand("notify", "Build and verify notifications");
    notify->require_subcommand(1);

    struct BuildArgs {
        std::string log, cert, mailbox_dir, passphrase;
        std::vector<std::string> pids;
        int retention = kDefaultRetentionDays;
    };
    auto b = std::make_shared<BuildArgs>();
    auto* build = notify->add_subcommand("build", "Notify every logged contact of the given own PIDs");
    build->add_option("--log", b->log)->required();
    build->add_option("--pid", b->pids, "Own PID (repeatable)")->required();
    build->add_option("--cert", b->cert, "Certificate file to attach");
    build->add_option("--mailbox-dir", b->mailbox_dir)->required();
    build->add_option("--passphrase", b->passphrase, "Decrypt the log with this passphrase");
    build->add_option("--retention", b->retention);
    build->callback([&, b] {
        action = [&out, b] {
            auto transform = log_transform(b->passphrase);
            auto log = load_log(b->log, b->retention, *transform);
            std::vector<Pid> pids;
            for (const auto& p : b->pids)
                pids.emplace_back(p);
            std::optional<CertificateOfInfection> cert;
            if (!b->cert.empty())
                cert = read_certificate(b->cert);
            FileMailboxStore store(b->mailbox_dir);
            for (const auto& [pad, n] : build_notifications(log, pids, cert)) {
                deliver(store, pad.str(), n);
                for (const auto& l : format_notification(n))
                    out << l << '\n';
            }
            return kOk;
        };
    });

    struct VerifyArgs {
        std::string notification, mailbox_dir, pad, log, directory, passphrase, mode = "required";
        Seconds tolerance = kDefaultTimeToleranceS;
        int margin = 0;
        int retention = kDefaultRetentionDays;
    };
    auto v = std::make_shared<VerifyArgs>();
    auto* verify = notify->add_subcommand("verify", "Verify received notifications against the own log");
    auto* from_file = verify->add_option("--notification", v->notification, "Notification file");
    auto* from_box = verify->add_option("--mailbox-dir", v->mailbox_dir, "Drain the mailbox of --pad");
    from_file->excludes(from_box);
    from_box->excludes(from_file);
    verify->add_option("--pad", v->pad)->needs(from_box);
    verify->add_option("--log", v->log)->required();
    verify->add_option("--directory", v->directory, "Lab directory file; empty directory when omitted");
    verify->add_option("--mode", v->mode)->check(CLI::IsMember({"required", "optional"}));
    verify->add_option("--tolerance", v->tolerance, "Seconds");
    verify->add_option("--margin-days", v->margin, "Post-test coverage margin");
    verify->add_option("--passphrase", v->passphrase);
    verify->add_option("--retention", v->retention);
    verify->callback([&, v, from_file, from_box] {
        if (from_file->count() == 0 && from_box->count() == 0)
            throw CLI::ValidationError("one of --notification or --mailbox-dir is required");
        if (from_box->count() > 0 && v->pad.empty())
            throw CLI::ValidationError("--mailbox-dir needs --pad");
        action = [&out, v] {
            auto transform = log_transform(v->passphrase);
            auto log = load_log(v->log, v->retention, *transform);
            LabDirectory dir = v->directory.empty() ? LabDirectory{} : read_directory(v->directory);
            std::vector<Notification> inbox;
            if (!v->notification.empty()) {
                inbox = parse_notifications(read_lines(v->notification));
            } else {
                FileMailboxStore store(v->mailbox_dir);
                inbox = poll_mailbox(store, v->pad);
            }
            const VerificationConfig config{v->mode == "optional" ? DeploymentMode::CertificateOptional
                                                                  : DeploymentMode::CertificateRequired,
                                            v->tolerance, v->margin};
            bool all_accepted = true;
            for (const auto& n : inbox) {
                auto verdict = verify_notification(n, log, dir, config);
                out << to_string(verdict.status) << '\n';
                if (verdict.matched_entry)
                    out << format_log_entry(*verdict.matched_entry) << '\n';
                all_accepted = all_accepted && is_accepted(verdict.status);
            }
            return all_accepted ? kOk : kRejected;
        };
    });
}

// --- registry --------------------------------------------------------------

int exit_for(RegistryResponse r)
{
    switch (r) {
    case RegistryResponse::Yes:
    case RegistryResponse::Confirmed:
    case RegistryResponse::Ok:
        return kOk;
    default:
        return kRejected;
    }
}

int serve(const std::string& host, std::uint16_t port, const std::string& directory_path,
          const std::string& repo_path, std::ostream& out)
{
    auto dir = read_directory(directory_path);
    RegistryService service(std::move(dir), repo_path.empty() ? std::nullopt : std::optional(repo_path));

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    RegistryServer server(service, host, port);
    out << "listening|" << server.port() << std::endl;

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.run();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    return kOk;
}

void add_registry(CLI::App& app, std::ostream& out, std::ostream& err, Action& action)
{
    auto* registry = app.add_subcommand("registry", "Notified-PID repository service and client");
    registry->require_subcommand(1);

    struct Args {
        std::string host = "127.0.0.1";
        std::uint16_t port = 0;
        std::string directory, repo, pid, contact_pid, claimant_pid, name, phrase, cert;
    };
    auto a = std::make_shared<Args>();

    auto* serve_cmd = registry->add_subcommand("serve", "Run the repository service");
    serve_cmd->add_option("--host", a->host);
    serve_cmd->add_option("--port", a->port, "0 picks a free port");
    serve_cmd->add_option("--directory", a->directory)->required();
    serve_cmd->add_option("--repo", a->repo, "Persistence file, replayed at start");
    serve_cmd->callback([&, a] {
        action = [&out, a] { return serve(a->host, a->port, a->directory, a->repo, out); };
    });

    auto client = [&, a](std::function<RegistryRequest()> make) {
        action = [&out, &err, a, make] {
            auto lines = format_request(make());
            std::string reply;
            try {
                reply = registry_roundtrip(a->host, a->port, lines);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::IoError)
                    throw;
                err << e.what() << '\n';
                return kUsage;
            }
            out << reply << '\n';
            return exit_for(parse_response(reply));
        };
    };

    auto* query = registry->add_subcommand("query", "Ask whether a PID was notified");
    auto* claim = registry->add_subcommand("claim", "Claim test priority for a notified contact");
    auto* ingest = registry->add_subcommand("ingest", "Submit a certificate of infection");
    for (auto* sub : {query, claim, ingest}) {
        sub->add_option("--host", a->host);
        sub->add_option("--port", a->port)->required();
    }
    query->add_option("--pid", a->pid)->required();
    query->callback([a, client] { client([a] { return RegistryRequest{QueryRequest{Pid(a->pid)}}; }); });

    claim->add_option("--contact-pid", a->contact_pid)->required();
    claim->add_option("--claimant-pid", a->claimant_pid)->required();
    claim->add_option("--name", a->name)->required();
    claim->add_option("--phrase", a->phrase)->required();
    claim->callback([a, client] {
        client([a] {
            return RegistryRequest{ClaimRequest{Pid(a->contact_pid), Pid(a->claimant_pid), a->name, a->phrase}};
        });
    });

    ingest->add_option("--cert", a->cert)->required();
    ingest->callback([a, client] { client([a] { return RegistryRequest{IngestRequest{read_certificate(a->cert)}}; }); });
}

// --- bizlog ----------------------------------------------------------------

VisitorLog read_chain(const std::string& chain, const std::string& head, const std::string& business)
{
    if (!std::filesystem::exists(chain) && !std::filesystem::exists(head))
        return VisitorLog{business, {}, kGenesisHash};
    return parse_chain(read_lines(chain), read_single_line(head), business);
}

void add_bizlog(CLI::App& app, std::ostream& out, Action& action)
{
    auto* bizlog = app.add_subcommand("bizlog", "Hash-chained visitor log of a business");
    bizlog->require_subcommand(1);

    struct Args {
        std::string chain, head, business, pid, repo;
        Timestamp at = 0, from = 0, to = 0;
    };
    auto a = std::make_shared<Args>();

    auto* append = bizlog->add_subcommand("append", "Record a visit");
    auto* verify = bizlog->add_subcommand("verify", "Check the chain against the published head");
    auto* evidence = bizlog->add_subcommand("evidence", "Did a certified-sick PID visit in a window?");
    for (auto* sub : {append, verify, evidence}) {
        sub->add_option("--chain", a->chain)->required();
        sub->add_option("--head", a->head)->required();
        sub->add_option("--business", a->business);
    }

    append->add_option("--pid", a->pid)->required();
    append->add_option("--at", a->at, "Visit time, unix seconds")->required();
    append->callback([&, a] {
        action = [&out, a] {
            auto log = read_chain(a->chain, a->head, a->business);
            const auto status = verify_chain(log);
            if (auto* t = std::get_if<TamperedAt>(&status))
                throw Error(ErrorCode::InvalidEntry, "refusing to extend a chain tampered at " + std::to_string(t->seq));
            append_visit(log, Pid(a->pid), a->at);
            write_lines(a->chain, format_chain(log));
            write_lines(a->head, {format_head(log)});
            out << format_head(log) << '\n';
            return kOk;
        };
    });

    verify->callback([&, a] {
        action = [&out, a] {
            auto status = verify_chain(parse_chain(read_lines(a->chain), read_single_line(a->head), a->business));
            if (auto* t = std::get_if<TamperedAt>(&status)) {
                out << "TAMPERED-AT " << t->seq << '\n';
                return kRejected;
            }
            out << "INTACT\n";
            return kOk;
        };
    });

    evidence->add_option("--pid", a->pid)->required();
    evidence->add_option("--from", a->from)->required();
    evidence->add_option("--to", a->to)->required();
    evidence->add_option("--repo", a->repo, "Notified-PID repository file")->required();
    evidence->callback([&, a] {
        action = [&out, a] {
            auto log = parse_chain(read_lines(a->chain), read_single_line(a->head), a->business);
            const auto status = verify_chain(log);
            if (auto* t = std::get_if<TamperedAt>(&status)) {
                out << "TAMPERED-AT " << t->seq << '\n';
                return kRejected;
            }
            auto repo = replay_notified_lines(read_lines(a->repo));
            auto verdict = evidence_query(log, Pid(a->pid), a->from, a->to,
                                          [&](const Pid& p) { return is_notified_pid(repo, p); });
            out << to_string(verdict) << '\n';
            return verdict == EvidenceVerdict::VisitAndCertified ? kOk : kRejected;
        };
    });
}

// --- log -------------------------------------------------------------------

void add_log(CLI::App& app, std::ostream& out, Action& action)
{
    auto* logcmd = app.add_subcommand("log", "Inspect and maintain a contact log");
    logcmd->require_subcommand(1);

    struct Args {
        std::string log, passphrase;
        int retention = kDefaultRetentionDays;
        Timestamp now = 0;
    };
    auto a = std::make_shared<Args>();

    auto* show = logcmd->add_subcommand("show", "Print the entries");
    auto* prune_cmd = logcmd->add_subcommand("prune", "Drop entries older than the retention period");
    auto* stats = logcmd->add_subcommand("stats", "Summarize exposures");
    for (auto* sub : {show, prune_cmd, stats}) {
        sub->add_option("--log", a->log)->required();
        sub->add_option("--passphrase", a->passphrase);
        sub->add_option("--retention", a->retention, "Days, 14-28");
    }
    prune_cmd->add_option("--now", a->now, "Current time, unix seconds")->required();

    show->callback([&, a] {
        action = [&out, a] {
            auto transform = log_transform(a->passphrase);
            const auto log = load_log(a->log, a->retention, *transform);
            for (const auto& e : log.entries())
                out << format_log_entry(e) << '\n';
            return kOk;
        };
    });
    prune_cmd->callback([&, a] {
        action = [&out, a] {
            auto transform = log_transform(a->passphrase);
            auto log = load_log(a->log, a->retention, *transform);
            const auto before = log.size();
            prune(log, a->now);
            save_log(a->log, log, *transform);
            out << "pruned|" << before - log.size() << '\n' << "kept|" << log.size() << '\n';
            return kOk;
        };
    });
    stats->callback([&, a] {
        action = [&out, a] {
            auto transform = log_transform(a->passphrase);
            auto s = exposure_statistics(load_log(a->log, a->retention, *transform));
            out << "stat|entries|" << s.entries << '\n' << "stat|distinct_peers|" << s.distinct_peers << '\n';
            for (const auto& [loc, n] : s.by_location)
                out << "stat|location|" << percent_encode(loc) << '|' << n << '\n';
            return kOk;
        };
    });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    if (sodium_init() < 0) {
        err << "libsodium failed to initialize\n";
        return kUsage;
    }
    CLI::App app{"Decentralized contact tracing toolkit", "ctrace"};
    app.require_subcommand(1);
    Action action;
    add_pid(app, out, action);
    add_sim(app, out, action);
    add_cert(app, out, action);
    add_notify(app, out, action);
    add_registry(app, out, err, action);
    add_bizlog(app, out, action);
    add_log(app, out, action);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << e.what() << '\n';
        return kUsage;
    }

    if (!action)
        return kUsage;
    try {
        return action();
    } catch (const std::exception& e) {
        err << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace ctrace::cli
