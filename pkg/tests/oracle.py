"""Independent scalar-level forward implementation used as a test oracle.

Everything here is pure Python over lists and math.exp: no numpy, no shared
helpers with the package. It mirrors the documented computation step by step
so any vectorization bug in the production path shows up as a mismatch.
"""
import math

SLOPE = 0.01


def _relu(xs):
    return [x if x > 0 else 0.0 for x in xs]


def _lrelu(xs):
    return [x if x >= 0 else SLOPE * x for x in xs]


def _matvec(w_rows, x):
    # w_rows has shape (len(x), out): out[k] = sum_i x[i] * w[i][k]
    out_dim = len(w_rows[0])
    return [sum(x[i] * w_rows[i][k] for i in range(len(x))) for k in range(out_dim)]


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _softmax(scores):
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def _encode_tree(enc, tree):
    n = len(tree.nodes)
    feats = [list(map(float, row)) for row in tree.features]
    nbrs = [[] for _ in range(n)]
    for p, c in tree.edges:
        nbrs[p].append(c)
        nbrs[c].append(p)

    def layer(states, w_self, w_nbr):
        out = []
        width = len(w_self[0])
        for v in range(n):
            if nbrs[v]:
                mean = [
                    sum(states[u][i] for u in nbrs[v]) / len(nbrs[v])
                    for i in range(len(states[v]))
                ]
            else:
                mean = [0.0] * len(states[v])
            pre = _add(_matvec(w_self, states[v]), _matvec(w_nbr, mean))
            out.append(_relu(pre))
        return out

    s1 = layer(feats, enc["l1s"], enc["l1n"])
    s2 = layer(s1, enc["l2s"], enc["l2n"])
    return s2[0]


def _params_as_lists(params):
    enc = params.encoder
    return {
        "enc": {
            "l1s": enc.layer1_self.tolist(),
            "l1n": enc.layer1_nbr.tolist(),
            "l2s": enc.layer2_self.tolist(),
            "l2n": enc.layer2_nbr.tolist(),
            "skip": enc.skip.tolist(),
            "proj_w": enc.proj_w.tolist(),
            "proj_b": enc.proj_b.tolist(),
        },
        "layers": [
            {
                "w_node": layer.w_node.tolist(),
                "w_edge": layer.w_edge.tolist(),
                "ctx_member": layer.ctx_member.tolist(),
                "ctx_incident": layer.ctx_incident.tolist(),
            }
            for layer in params.layers
        ],
        "head_w": params.head_w.tolist(),
        "head_b": params.head_b.tolist(),
    }


def scalar_forward(params, dataset, hg):
    """Logits for every news item, computed with scalar loops (eval mode)."""
    p = _params_as_lists(params)
    d = params.hidden_dim

    states = []
    for item, tree in zip(dataset.items, dataset.trees):
        root = _encode_tree(p["enc"], tree)
        lin = _matvec(p["enc"]["skip"], list(map(float, item.feature)))
        act = _relu(lin + root)
        states.append(_add(_matvec(p["enc"]["proj_w"], act), p["enc"]["proj_b"]))

    members_of = [list(e.members) for e in hg.hyperedges]
    incident_of = [[] for _ in range(hg.n_nodes)]
    for j, members in enumerate(members_of):
        for i in members:
            incident_of[i].append(j)

    for layer in p["layers"]:
        pvec = [_matvec(layer["w_node"], v) for v in states]
        hn = [_lrelu(x) for x in pvec]
        edge_states = []
        for members in members_of:
            scores = [_dot(layer["ctx_member"], hn[k]) for k in members]
            alpha = _softmax(scores)
            agg = [0.0] * d
            for a, k in zip(alpha, members):
                agg = _add(agg, [a * x for x in pvec[k]])
            edge_states.append(_relu(agg))
        q = [_matvec(layer["w_edge"], e) for e in edge_states]
        lq = [_lrelu(x) for x in q]
        new_states = []
        for i in range(hg.n_nodes):
            incident = incident_of[i]
            if not incident:
                new_states.append([0.0] * d)
                continue
            scores = [
                _dot(layer["ctx_incident"][:d], lq[j])
                + _dot(layer["ctx_incident"][d:], hn[i])
                for j in incident
            ]
            beta = _softmax(scores)
            agg = [0.0] * d
            for b, j in zip(beta, incident):
                agg = _add(agg, [b * x for x in q[j]])
            new_states.append(_relu(agg))
        states = new_states

    return [
        _add(_matvec(p["head_w"], v), p["head_b"]) for v in states
    ]
