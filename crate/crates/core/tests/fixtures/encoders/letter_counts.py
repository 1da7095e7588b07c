"""Line-protocol test encoder: 8-bin letter histograms."""
import json
import sys

DIM = int(sys.argv[1]) if len(sys.argv) > 1 else 8

for line in sys.stdin:
    texts = json.loads(line)["texts"]
    vectors = []
    for t in texts:
        v = [0.0] * 8
        for ch in t:
            v[ord(ch) % 8] += 1.0
        vectors.append(v)
    sys.stdout.write(json.dumps({"vectors": vectors, "dim": DIM}) + "\n")
    sys.stdout.flush()
