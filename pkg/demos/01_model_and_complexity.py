#!/usr/bin/env python3
# Build the CNN14 preset and inspect its analytical cost.
#
# The preset is a plain 12-conv audio tagger: six blocks of
# [Conv3x3 -> BN -> ReLU] x 2 with widths 64..2048, average pooling
# between blocks, global (mean+max) pooling, and a two-layer dense head
# over 527 classes.  Everything below is closed-form accounting; no
# weights are materialized.

from prunekit import complexity, graph

spec = graph.build_cnn14_preset()
print(f"layers: {len(spec.layers)}, convs: {len(spec.conv_layers())}")
print(f"input:  {spec.input_shape} log-mel frames x bins")

# Shape inference walks the graph once; 'same' conv padding preserves
# spatial dims, each AvgPool floor-halves them.
shapes = graph.infer_shapes(spec)
for i in range(1, 13, 2):
    c, t, f = shapes[f"C{i}"]
    print(f"  C{i:<2} feature map: {c:>4} channels x ({t} x {f})")

report = complexity.analyze(spec)
print(f"\ntrainable parameters: {report.total_params:,}")     # 80,753,615
print(f"BN running stats:     {report.total_aux_params:,}")
print(f"conv+dense MACs:      {report.total_macs:,}")          # ~2.0e10 per clip

# Per-layer view: the last six convs dominate the parameter budget.
per = {e.layer: e for e in report.entries}
c7_12 = sum(per[f"C{i}"].params for i in range(7, 13))
print(f"C7-C12 share of parameters: {100 * c7_12 / report.total_params:.1f}%")

print("\nCSV report:")
print(report.to_csv())
