//! Node-list JSON form: `{nodes: [{id, op, children}], root, params: [{edge, index}]}`.
//!
//! Node ids follow pre-order. A child is either a node id or one of the leaf
//! names `"x"`, `"0"`, `"1"`. A parameter edge is `[consumer_id, slot]`, with
//! slot `-1` (and the root's id) for the output edge.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ActivationGraph, EdgeRef, Expr, OperatorKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub root: usize,
    pub params: Vec<ParamJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub op: String,
    pub children: Vec<ChildJson>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChildJson {
    Node(usize),
    Leaf(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamJson {
    pub edge: [i64; 2],
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JsonError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("node {id}: {op} takes {expected} input(s), {found} given")]
    Arity {
        id: usize,
        op: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),
    #[error("node id {0} is missing or duplicated")]
    BadNodeId(usize),
    #[error("node {0} is not reachable exactly once from the root")]
    NotATree(usize),
    #[error("parameter edge {0:?} does not exist or carries two parameters")]
    BadEdge([i64; 2]),
    #[error(transparent)]
    Graph(#[from] super::GraphError),
}

pub fn to_json(g: &ActivationGraph) -> GraphJson {
    let mut nodes = Vec::new();
    write_node(g.root().bare(), &mut nodes);
    nodes.sort_by_key(|n| n.id);
    let params = g
        .param_sites()
        .into_iter()
        .map(|s| ParamJson {
            edge: match s.edge {
                EdgeRef::Output => [0, -1],
                EdgeRef::Slot { consumer, slot } => [consumer as i64, slot as i64],
            },
            index: s.index,
        })
        .collect();
    GraphJson { nodes, root: 0, params }
}

/// Appends the node rooted at `e` (which must be an operator) and returns its id.
fn write_node(e: &Expr, nodes: &mut Vec<NodeJson>) -> usize {
    let id = nodes.len();
    nodes.push(NodeJson {
        id,
        op: String::new(),
        children: Vec::new(),
    });
    let (op, args): (OperatorKind, Vec<&Expr>) = match e {
        Expr::Unary(op, a) => (OperatorKind::Unary(*op), vec![a]),
        Expr::Binary(op, a, b) => (OperatorKind::Binary(*op), vec![a, b]),
        _ => unreachable!("write_node called on a leaf"),
    };
    let mut children = Vec::with_capacity(args.len());
    for a in args {
        children.push(match a.bare() {
            Expr::Input => ChildJson::Leaf("x".into()),
            Expr::Zero => ChildJson::Leaf("0".into()),
            Expr::One => ChildJson::Leaf("1".into()),
            inner => ChildJson::Node(write_node(inner, nodes)),
        });
    }
    nodes[id].op = op.name().to_owned();
    nodes[id].children = children;
    id
}

pub fn from_json(g: &GraphJson) -> Result<ActivationGraph, JsonError> {
    let mut by_id: HashMap<usize, &NodeJson> = HashMap::new();
    for n in &g.nodes {
        if by_id.insert(n.id, n).is_some() {
            return Err(JsonError::BadNodeId(n.id));
        }
    }
    let mut params: HashMap<(usize, i64), usize> = HashMap::new();
    for p in &g.params {
        if p.edge[0] < 0 || p.edge[1] < -1 {
            return Err(JsonError::BadEdge(p.edge));
        }
        if p.edge[1] == -1 && p.edge[0] as usize != g.root {
            return Err(JsonError::BadEdge(p.edge));
        }
        if params.insert((p.edge[0] as usize, p.edge[1]), p.index).is_some() {
            return Err(JsonError::BadEdge(p.edge));
        }
    }
    let mut visited = HashSet::new();
    let mut used = HashSet::new();
    let mut root = build(g.root, &by_id, &params, &mut visited, &mut used)?;
    if let Some(&i) = params.get(&(g.root, -1)) {
        used.insert((g.root, -1));
        root = Expr::param(i, root);
    }
    if let Some(n) = g.nodes.iter().find(|n| !visited.contains(&n.id)) {
        return Err(JsonError::NotATree(n.id));
    }
    if let Some(&(c, s)) = params.keys().find(|k| !used.contains(*k)) {
        return Err(JsonError::BadEdge([c as i64, s]));
    }
    Ok(ActivationGraph::new(root)?)
}

fn build(
    id: usize,
    by_id: &HashMap<usize, &NodeJson>,
    params: &HashMap<(usize, i64), usize>,
    visited: &mut HashSet<usize>,
    used: &mut HashSet<(usize, i64)>,
) -> Result<Expr, JsonError> {
    let node = by_id.get(&id).ok_or(JsonError::BadNodeId(id))?;
    if !visited.insert(id) {
        return Err(JsonError::NotATree(id));
    }
    let op: OperatorKind = node
        .op
        .parse()
        .map_err(|()| JsonError::UnknownOperator(node.op.clone()))?;
    if node.children.len() != op.arity() {
        return Err(JsonError::Arity {
            id,
            op: node.op.clone(),
            expected: op.arity(),
            found: node.children.len(),
        });
    }
    let mut args = Vec::with_capacity(2);
    for (slot, c) in node.children.iter().enumerate() {
        let mut e = match c {
            ChildJson::Node(child) => build(*child, by_id, params, visited, used)?,
            ChildJson::Leaf(s) => match s.as_str() {
                "x" => Expr::Input,
                "0" => Expr::Zero,
                "1" => Expr::One,
                other => return Err(JsonError::UnknownLeaf(other.to_owned())),
            },
        };
        let key = (id, slot as i64);
        if let Some(&i) = params.get(&key) {
            used.insert(key);
            e = Expr::param(i, e);
        }
        args.push(e);
    }
    let mut args = args.into_iter();
    let a = args.next().unwrap_or(Expr::Input);
    Ok(match op {
        OperatorKind::Unary(u) => Expr::unary(u, a),
        OperatorKind::Binary(b) => Expr::binary(b, a, args.next().unwrap_or(Expr::Input)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let g = ActivationGraph::parse("p0(mul(log_sigmoid(p1(x)), arcsinh(1)))").unwrap();
        let j = serde_json::to_value(g.to_json()).unwrap();
        assert_eq!(
            j,
            serde_json::json!({
                "nodes": [
                    {"id": 0, "op": "mul", "children": [1, 2]},
                    {"id": 1, "op": "log_sigmoid", "children": ["x"]},
                    {"id": 2, "op": "arcsinh", "children": ["1"]},
                ],
                "root": 0,
                "params": [
                    {"edge": [0, -1], "index": 0},
                    {"edge": [1, 0], "index": 1},
                ],
            })
        );
    }

    #[test]
    fn json_roundtrip() {
        for s in [
            "p0(sigmoid(sub(p1(abs(x)), arctan(p2(x)))))",
            "max(p0(relu(x)), relu(x))",
            "add(tanh(x), p0(0))",
            "relu(x)",
        ] {
            let g = ActivationGraph::parse(s).unwrap();
            let text = serde_json::to_string(&g.to_json()).unwrap();
            let back: GraphJson = serde_json::from_str(&text).unwrap();
            assert_eq!(ActivationGraph::from_json(&back).unwrap(), g, "{s}");
        }
    }

    #[test]
    fn rejects_dag_and_dangling_edges() {
        let dag: GraphJson = serde_json::from_value(serde_json::json!({
            "nodes": [
                {"id": 0, "op": "add", "children": [1, 1]},
                {"id": 1, "op": "tanh", "children": ["x"]},
            ],
            "root": 0,
            "params": [],
        }))
        .unwrap();
        assert_eq!(ActivationGraph::from_json(&dag), Err(JsonError::NotATree(1)));
        let dangling: GraphJson = serde_json::from_value(serde_json::json!({
            "nodes": [{"id": 0, "op": "tanh", "children": ["x"]}],
            "root": 0,
            "params": [{"edge": [0, 1], "index": 0}],
        }))
        .unwrap();
        assert!(matches!(
            ActivationGraph::from_json(&dangling),
            Err(JsonError::BadEdge(_))
        ));
    }
}
