//! Log-message tokenization with variable-class abstraction.
//!
//! Messages split on whitespace and punctuation boundaries; tokens that are
//! pure numerals, hex strings, IPv4 dotted quads, or filesystem paths are
//! replaced by the class markers `NUM`/`HEX`/`IP`/`PATH` so that templates
//! cluster on constant text. Class markers are ordinary vocabulary entries
//! downstream, which keeps anomalies expressed through variable classes
//! visible to the embeddings.

/// Marker for numeric variables.
pub const NUM: &str = "NUM";
/// Marker for hexadecimal variables.
pub const HEX: &str = "HEX";
/// Marker for IPv4 addresses.
pub const IP: &str = "IP";
/// Marker for filesystem paths.
pub const PATH: &str = "PATH";
/// Produced when a message normalizes to nothing.
pub const EMPTY: &str = "EMPTY";
/// Wildcard slot in a mined template.
pub const WILDCARD: &str = "<*>";

const SEPARATORS: &[char] = &[
    ':', ',', ';', '=', '(', ')', '[', ']', '{', '}', '"', '\'', '`', '<', '>', '|', '&', '!',
    '?', '#',
];

/// Tokenize one raw log message.
pub fn tokenize(message: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in message.split_whitespace() {
        for piece in word.split(SEPARATORS) {
            let piece = piece.trim_matches(|c| c == '.' || c == '*');
            if piece.is_empty() {
                continue;
            }
            out.push(classify(piece));
        }
    }
    if out.is_empty() {
        out.push(EMPTY.to_string());
    }
    out
}

fn classify(token: &str) -> String {
    if is_ipv4(token) {
        IP.to_string()
    } else if is_hex(token) {
        HEX.to_string()
    } else if is_numeral(token) {
        NUM.to_string()
    } else if is_path(token) {
        PATH.to_string()
    } else {
        token.to_lowercase()
    }
}

fn is_numeral(token: &str) -> bool {
    let t = token.strip_prefix(['+', '-']).unwrap_or(token);
    if t.is_empty() {
        return false;
    }
    let mut dots = 0;
    for c in t.chars() {
        if c == '.' {
            dots += 1;
            if dots > 1 {
                return false;
            }
        } else if !c.is_ascii_digit() {
            return false;
        }
    }
    t.chars().any(|c| c.is_ascii_digit())
}

fn is_hex(token: &str) -> bool {
    if let Some(rest) = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")) {
        return !rest.is_empty() && rest.chars().all(|c| c.is_ascii_hexdigit());
    }
    // Bare hex ids (block/container hashes): long, mixed digits and a-f.
    token.len() >= 6
        && token.chars().all(|c| c.is_ascii_hexdigit())
        && token.chars().any(|c| c.is_ascii_digit())
        && token.chars().any(|c| c.is_ascii_alphabetic())
}

fn is_ipv4(token: &str) -> bool {
    let parts: Vec<&str> = token.split('.').collect();
    parts.len() == 4
        && parts
            .iter()
            .all(|p| !p.is_empty() && p.len() <= 3 && p.chars().all(|c| c.is_ascii_digit()))
}

fn is_path(token: &str) -> bool {
    token.len() > 1 && token.contains('/')
}

/// True for the reserved class markers and the template wildcard.
pub fn is_class_marker(token: &str) -> bool {
    matches!(token, NUM | HEX | IP | PATH | EMPTY | WILDCARD)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_ip_and_port() {
        // regex-class oracle: dotted quad -> IP, digits -> NUM
        assert_eq!(tokenize("Connected to 10.0.0.1:8080"), vec!["connected", "to", IP, NUM]);
    }

    #[test]
    fn constant_message_passes_through_lowercased() {
        assert_eq!(tokenize("Shutdown hook called"), vec!["shutdown", "hook", "called"]);
    }

    #[test]
    fn classifies_hex() {
        assert_eq!(tokenize("read 0x1A bytes"), vec!["read", HEX, "bytes"]);
    }

    #[test]
    fn classifies_paths_and_floats() {
        assert_eq!(
            tokenize("wrote /var/log/app.log in 3.5 ms"),
            vec!["wrote", PATH, "in", NUM, "ms"]
        );
    }

    #[test]
    fn empty_after_normalization_yields_empty_marker() {
        assert_eq!(tokenize("  ::: "), vec![EMPTY]);
    }

    #[test]
    fn oracle_spot_checks() {
        // Independent per-class oracles on a mixed line.
        let toks = tokenize("executor 7 lost on 192.168.0.12 (block 0xdeadbeef) at /tmp/x");
        assert_eq!(
            toks,
            vec!["executor", NUM, "lost", "on", IP, "block", HEX, "at", PATH]
        );
    }
}
