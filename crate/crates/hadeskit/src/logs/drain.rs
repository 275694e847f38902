//! Fixed-depth-tree template mining.
//!
//! Messages descend a prefix tree keyed by token count and then by leading
//! tokens (variable-looking tokens share a wildcard branch). At the leaf, the
//! template with the highest positional match ratio wins; above the
//! similarity threshold the message merges into it (mismatching positions
//! become wildcards), otherwise a new template is born. Replaying the same
//! stream therefore reproduces the same ids and the same final store.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{is_class_marker, WILDCARD};

pub type EventId = u32;

/// One mined template: constant tokens plus wildcard slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: EventId,
    pub tokens: Vec<String>,
}

impl Template {
    pub fn render(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Default, Clone)]
struct TreeNode {
    children: HashMap<String, TreeNode>,
    /// Template ids whose descent path ends here, in creation order.
    leaf: Vec<EventId>,
}

/// Mined templates plus the parse tree that assigns event ids.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: Vec<Template>,
    root: HashMap<usize, TreeNode>,
    pub sim_threshold: f64,
    pub max_depth: usize,
    frozen: bool,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::new(0.5, 4)
    }
}

impl TemplateStore {
    pub fn new(sim_threshold: f64, max_depth: usize) -> Self {
        assert!(
            sim_threshold > 0.0 && sim_threshold <= 1.0,
            "similarity threshold must be in (0, 1]"
        );
        assert!(max_depth >= 1);
        Self {
            templates: Vec::new(),
            root: HashMap::new(),
            sim_threshold,
            max_depth,
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn template(&self, id: EventId) -> &Template {
        &self.templates[id as usize]
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stop mining; the store becomes read-only and shareable.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    fn branch_key(token: &str) -> &str {
        // Variable-looking tokens (class markers or digit-bearing) share one
        // branch so value churn cannot split the tree.
        if is_class_marker(token) || token.chars().any(|c| c.is_ascii_digit()) {
            WILDCARD
        } else {
            token
        }
    }

    fn descend_path(tokens: &[String], max_depth: usize) -> Vec<&str> {
        tokens
            .iter()
            .take(max_depth)
            .map(|t| Self::branch_key(t))
            .collect()
    }

    /// Fraction of positions where the template token equals the message
    /// token exactly; wildcards never count as matches.
    fn match_ratio(template: &[String], tokens: &[String]) -> f64 {
        debug_assert_eq!(template.len(), tokens.len());
        if template.is_empty() {
            return 0.0;
        }
        let hits = template
            .iter()
            .zip(tokens)
            .filter(|(a, b)| a != &WILDCARD && a == b)
            .count();
        hits as f64 / template.len() as f64
    }

    fn best_candidate(&self, leaf: &[EventId], tokens: &[String]) -> Option<(EventId, f64)> {
        let mut best: Option<(EventId, f64)> = None;
        for &id in leaf {
            let ratio = Self::match_ratio(&self.templates[id as usize].tokens, tokens);
            if best.map_or(true, |(_, r)| ratio > r) {
                best = Some((id, ratio));
            }
        }
        best
    }

    /// Assign (and, while unfrozen, mine) the event id for a token sequence.
    pub fn parse_event(&mut self, tokens: &[String]) -> EventId {
        assert!(!self.frozen, "parse_event on a frozen store; use match_event");
        assert!(!tokens.is_empty(), "cannot parse an empty token sequence");

        let len = tokens.len();
        let path = Self::descend_path(tokens, self.max_depth);
        let node = self
            .root
            .entry(len)
            .or_default();
        let node = path.iter().fold(node, |node, key| {
            node.children.entry(key.to_string()).or_default()
        });

        if let Some((id, ratio)) = {
            let leaf = node.leaf.clone();
            self.best_candidate(&leaf, tokens)
        } {
            if ratio >= self.sim_threshold {
                // Merge: wildcard every mismatching position.
                let template = &mut self.templates[id as usize];
                for (slot, tok) in template.tokens.iter_mut().zip(tokens) {
                    if slot != tok && slot != WILDCARD {
                        *slot = WILDCARD.to_string();
                    }
                }
                return id;
            }
        }

        let id = self.templates.len() as EventId;
        self.templates.push(Template {
            id,
            tokens: tokens.to_vec(),
        });
        // Re-borrow the leaf after the template push.
        let node = self.root.get_mut(&len).unwrap();
        let node = path.iter().fold(node, |node, key| {
            node.children.get_mut(*key).unwrap()
        });
        node.leaf.push(id);
        id
    }

    /// Read-only matching against a frozen store. Returns `None` when no
    /// template clears the similarity threshold.
    pub fn match_event(&self, tokens: &[String]) -> Option<EventId> {
        if tokens.is_empty() {
            return None;
        }
        let node = self.root.get(&tokens.len())?;
        let mut node = node;
        for key in Self::descend_path(tokens, self.max_depth) {
            node = match node.children.get(key) {
                Some(n) => n,
                None => node.children.get(WILDCARD)?,
            };
        }
        match self.best_candidate(&node.leaf, tokens) {
            Some((id, ratio)) if ratio >= self.sim_threshold => Some(id),
            _ => None,
        }
    }

    /// Rebuild a store from exported templates (insertion order = id order).
    pub fn from_templates(
        templates: Vec<Template>,
        sim_threshold: f64,
        max_depth: usize,
    ) -> Self {
        let mut store = Self::new(sim_threshold, max_depth);
        for (expect_id, t) in templates.into_iter().enumerate() {
            debug_assert_eq!(t.id as usize, expect_id, "template ids must be dense");
            let len = t.tokens.len();
            let path = Self::descend_path(&t.tokens, max_depth);
            let node = store.root.entry(len).or_default();
            let node = path.iter().fold(node, |node, key| {
                node.children.entry(key.to_string()).or_default()
            });
            let id = store.templates.len() as EventId;
            node.leaf.push(id);
            store.templates.push(Template { id, tokens: t.tokens });
        }
        store.freeze();
        store
    }

    /// JSON export of `{id, template_tokens[]}` records.
    pub fn export_json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            id: EventId,
            template_tokens: &'a [String],
        }
        let rows: Vec<Row> = self
            .templates
            .iter()
            .map(|t| Row { id: t.id, template_tokens: &t.tokens })
            .collect();
        serde_json::to_string_pretty(&rows).expect("template export")
    }
}
