import json
import subprocess
import sys

import jsonschema

cli, config, schema_path = sys.argv[1:4]
with open(schema_path) as fh:
    schema = json.load(fh)
out = subprocess.run([cli, "simulate", "--config", config, "--timing"], check=True, capture_output=True, text=True)
lines = [line for line in out.stdout.splitlines() if line.strip()]
if not lines:
    sys.exit("no records")
for line in lines:
    jsonschema.validate(json.loads(line), schema)
print(f"{len(lines)} records valid")
