/**
 * Entry point.
 *
 *   node dist/main.js --mode replay --manifest manifest.json          # stdio
 *   node dist/main.js --mode replay --manifest manifest.json --batch DIR
 *   node dist/main.js --mode command -- cmd arg1 arg2                 # stdio
 */
import { runBatch } from './batch';
import { loadManifest, ManifestError } from './manifest';
import { CommandBackend } from './model';
import { Backend, serve } from './protocol';
import { ReplayBackend } from './replay';

interface Args {
  mode: string;
  manifest?: string;
  batch?: string;
  command: string[];
}

function parseArgs(argv: string[]): Args {
  const args: Args = { mode: 'replay', command: [] };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--mode') args.mode = argv[++i];
    else if (a === '--manifest') args.manifest = argv[++i];
    else if (a === '--batch') args.batch = argv[++i];
    else if (a === '--') {
      args.command = argv.slice(i + 1);
      break;
    } else throw new Error(`unknown argument ${a}`);
  }
  return args;
}

function buildBackend(args: Args): Backend {
  if (args.mode === 'replay') {
    if (!args.manifest) throw new Error('replay mode needs --manifest');
    return new ReplayBackend(loadManifest(args.manifest));
  }
  if (args.mode === 'command') {
    return new CommandBackend(args.command);
  }
  throw new Error(`unknown mode ${args.mode}; use replay or command`);
}

async function main(): Promise<number> {
  let args: Args;
  let backend: Backend;
  try {
    args = parseArgs(process.argv.slice(2));
    backend = buildBackend(args);
  } catch (e) {
    const detail = e instanceof Error ? e.message : String(e);
    process.stderr.write(detail + '\n');
    return e instanceof ManifestError ? 3 : 2;
  }
  if (args.batch) {
    runBatch(backend, args.batch);
    return 0;
  }
  await serve(backend, process.stdin, process.stdout);
  return 0;
}

main().then((code) => {
  process.exitCode = code;
});
