//! Newick reading and writing for integer-labelled topologies.
//!
//! Only topology is supported: leaves are positive integers, interior
//! nodes are unlabelled, no branch lengths. A top-level bifurcation reads
//! as a rooted tree, a trifurcation as an unrooted one.

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::tree::{Node, NodeId, PhyloTree, RootKind};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected '{}', found '{}'", ch as char, c as char))),
            None => Err(self.err(format!("expected '{}', found end of input", ch as char))),
        }
    }

    fn push(&mut self, label: Option<u32>) -> NodeId {
        self.nodes.push(Node {
            parent: None,
            children: ArrayVec::new(),
            label,
        });
        self.nodes.len() - 1
    }

    /// Parses one subtree and returns its node id. Uses an explicit stack
    /// so deep caterpillars do not overflow.
    fn subtree(&mut self) -> Result<NodeId> {
        let mut open: Vec<NodeId> = Vec::new();
        loop {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    let id = self.push(None);
                    open.push(id);
                    continue;
                }
                Some(c) if c.is_ascii_digit() => {}
                Some(c) => return Err(self.err(format!("unexpected '{}'", c as char))),
                None => return Err(self.err("unexpected end of input")),
            }
            let mut done = self.label()?;
            // Close as many groups as the input allows.
            loop {
                let Some(&top) = open.last() else {
                    return Ok(done);
                };
                if self.nodes[top].children.is_full() {
                    return Err(self.err("more than three children"));
                }
                self.nodes[top].children.push(done);
                self.nodes[done].parent = Some(top);
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        break;
                    }
                    Some(b')') => {
                        self.pos += 1;
                        open.pop();
                        if self.nodes[top].children.len() < 2 {
                            return Err(self.err("interior node with a single child"));
                        }
                        if !open.is_empty() && self.nodes[top].children.len() == 3 {
                            return Err(self.err("multifurcation below the top node"));
                        }
                        if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                            return Err(self.err("interior labels are not supported"));
                        }
                        if self.peek() == Some(b':') {
                            return Err(self.err("branch lengths are not supported"));
                        }
                        done = top;
                    }
                    Some(b':') => return Err(self.err("branch lengths are not supported")),
                    Some(c) => return Err(self.err(format!("unexpected '{}'", c as char))),
                    None => return Err(self.err("unexpected end of input")),
                }
            }
        }
    }

    fn label(&mut self) -> Result<NodeId> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let value: u32 = text.parse().map_err(|_| Error::Parse {
            pos: start,
            msg: format!("bad taxon '{text}'"),
        })?;
        if value == 0 {
            return Err(Error::Parse {
                pos: start,
                msg: "taxon ids must be positive".into(),
            });
        }
        Ok(self.push(Some(value)))
    }
}

impl PhyloTree {
    pub fn from_newick(s: &str) -> Result<PhyloTree> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
            nodes: Vec::new(),
        };
        if p.peek() != Some(b'(') {
            return Err(p.err("tree must start with '('"));
        }
        let top = p.subtree()?;
        p.expect(b';')?;
        if p.peek().is_some() {
            return Err(p.err("trailing input after ';'"));
        }
        let mut nodes = p.nodes;
        let kind = match nodes[top].children.len() {
            2 => {
                let root = nodes.len();
                nodes.push(Node {
                    parent: None,
                    children: [top].into_iter().collect(),
                    label: None,
                });
                nodes[top].parent = Some(root);
                RootKind::Rooted { root }
            }
            3 => RootKind::Unrooted { anchor: top },
            _ => unreachable!("parser enforces 2 or 3 children"),
        };
        PhyloTree::from_parts(nodes, kind)
    }

    /// Canonical Newick: children ordered by their smallest taxon.
    pub fn to_newick(&self) -> String {
        let top = self.root_or_anchor();
        let start = if self.is_rooted() {
            self.children(top)[0]
        } else {
            top
        };
        let min_label = self.min_labels();
        let mut out = String::new();
        enum Step {
            Visit(NodeId),
            Text(&'static str),
        }
        let mut stack = vec![Step::Visit(start)];
        while let Some(step) = stack.pop() {
            match step {
                Step::Text(s) => out.push_str(s),
                Step::Visit(v) => {
                    if let Some(l) = self.label(v) {
                        out.push_str(&l.to_string());
                        continue;
                    }
                    let mut kids: Vec<NodeId> = self.children(v).to_vec();
                    kids.sort_by_key(|&c| min_label[c]);
                    out.push('(');
                    stack.push(Step::Text(")"));
                    for (i, &c) in kids.iter().enumerate().rev() {
                        stack.push(Step::Visit(c));
                        if i > 0 {
                            stack.push(Step::Text(","));
                        }
                    }
                }
            }
        }
        out.push(';');
        out
    }

    fn min_labels(&self) -> Vec<u32> {
        let mut m = vec![u32::MAX; self.node_count()];
        for &id in self.preorder().iter().rev() {
            m[id] = match self.label(id) {
                Some(l) => l,
                None => self.children(id).iter().map(|&c| m[c]).min().unwrap_or(u32::MAX),
            };
        }
        m
    }
}
