"""Built-in map documents.

`intersection_document` builds a four-way road crossing: two 5 m-wide
roads meet at the origin, sidewalks run 3.5 m from the road center lines
and crosswalks join the four sidewalk corners. Every walkway carries a
pair of opposite directed edges. Goals sit at the eight sidewalk arm
ends.
"""

BUILTIN_PREFIX = "builtin:"


def _edge_pair(edges, a, b, kind, v_ref, d):
    for src, dst in ((a, b), (b, a)):
        edges.append({"id": f"{src}->{dst}", "from": src, "to": dst,
                      "kind": kind, "v_ref": v_ref, "d": d})


def intersection_document(half=3.5, arm_end=10.0, road_half=2.5,
                          v_ref=1.0, d=0.5):
    """Four-way intersection with 8 sidewalk arms and 4 crosswalks.

    `half` is the corner offset from the intersection center, `arm_end`
    the coordinate of the sidewalk arm ends, `road_half` the road
    half-width used by the rasterizer.
    """
    corners = {
        "c_sw": (-half, -half), "c_nw": (-half, half),
        "c_ne": (half, half), "c_se": (half, -half),
    }
    arm_ends = {
        "s_w": (-half, -arm_end), "s_e": (half, -arm_end),
        "n_w": (-half, arm_end), "n_e": (half, arm_end),
        "w_s": (-arm_end, -half), "w_n": (-arm_end, half),
        "e_s": (arm_end, -half), "e_n": (arm_end, half),
    }
    nodes = [{"id": nid, "x": x, "y": y}
             for nid, (x, y) in {**corners, **arm_ends}.items()]

    edges = []
    arms = [("s_w", "c_sw"), ("s_e", "c_se"), ("n_w", "c_nw"), ("n_e", "c_ne"),
            ("w_s", "c_sw"), ("w_n", "c_nw"), ("e_s", "c_se"), ("e_n", "c_ne")]
    for a, b in arms:
        _edge_pair(edges, a, b, "sidewalk", v_ref, d)
    crossings = [("c_sw", "c_se"), ("c_sw", "c_nw"),
                 ("c_nw", "c_ne"), ("c_se", "c_ne")]
    for a, b in crossings:
        _edge_pair(edges, a, b, "crosswalk", v_ref, d)

    goals = [{"id": f"g_{nid}", "x": x, "y": y}
             for nid, (x, y) in sorted(arm_ends.items())]

    span = arm_end + 2.0
    areas = [
        {"kind": "road", "polygon": [[-road_half, -span], [road_half, -span],
                                     [road_half, span], [-road_half, span]]},
        {"kind": "road", "polygon": [[-span, -road_half], [span, -road_half],
                                     [span, road_half], [-span, road_half]]},
    ]
    return {"format": 1, "nodes": nodes, "edges": edges, "goals": goals,
            "areas": areas, "background": "obstacle"}


def resolve_map_name(name):
    """Map a `builtin:<name>` string to its document, else return None."""
    if not isinstance(name, str) or not name.startswith(BUILTIN_PREFIX):
        return None
    key = name[len(BUILTIN_PREFIX):]
    builders = {"intersection": intersection_document}
    if key not in builders:
        raise KeyError(f"unknown builtin map {key!r}; "
                       f"available: {sorted(builders)}")
    return builders[key]()
