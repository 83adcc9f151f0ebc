#!/usr/bin/env node
// SMT-LIB2 stdio front-end for the WebAssembly build of Z3.
//
// Reads SMT-LIB2 commands from stdin and writes solver output to stdout,
// mimicking `z3 -in`.  State persists across commands; `(reset)` clears it.
// Exits when stdin closes or an `(exit)` command is processed.

"use strict";

const { init } = require("z3-solver");

// Split the buffer into complete top-level forms, leaving any trailing
// partial form in place.  Tracks string literals and ; comments so that
// parentheses inside them do not count.
function extractForms(state) {
  const forms = [];
  let depth = 0;
  let start = 0;
  let i = state.consumed;
  const text = state.buffer;
  let inString = state.inString;
  let inComment = state.inComment;
  for (; i < text.length; i++) {
    const c = text[i];
    if (inComment) {
      if (c === "\n") inComment = false;
      continue;
    }
    if (inString) {
      if (c === '"') inString = false;
      continue;
    }
    if (c === '"') inString = true;
    else if (c === ";") inComment = true;
    else if (c === "(") depth++;
    else if (c === ")") {
      depth--;
      if (depth === 0) {
        forms.push(text.slice(start, i + 1));
        start = i + 1;
      }
      if (depth < 0) depth = 0; // stray close paren: be forgiving
    }
  }
  state.buffer = text.slice(start);
  state.consumed = state.buffer.length;
  // Partial-form scan state must be recomputed next round from the kept tail,
  // so only carry the flags when the tail is still inside the construct.
  state.inString = inString;
  state.inComment = inComment;
  state.consumed = 0;
  return forms;
}

async function main() {
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);

  const state = { buffer: "", consumed: 0, inString: false, inComment: false };
  let chain = Promise.resolve();
  let sawExit = false;

  const evalForms = (forms) => {
    if (!forms.length) return;
    const batch = forms.join("\n");
    chain = chain.then(async () => {
      if (sawExit) return;
      try {
        const out = await Z3.eval_smtlib2_string(ctx, batch);
        if (out && out.length) process.stdout.write(out);
      } catch (err) {
        process.stdout.write(`(error "${String(err).replace(/"/g, "'")}")\n`);
      }
      if (/\(\s*exit\s*\)/.test(batch)) {
        sawExit = true;
        process.exit(0);
      }
    });
  };

  process.stdin.setEncoding("utf8");
  process.stdin.on("data", (chunk) => {
    state.buffer += chunk;
    evalForms(extractForms(state));
  });
  process.stdin.on("end", () => {
    evalForms(extractForms(state));
    chain.then(() => process.exit(0));
  });
}

main().catch((err) => {
  process.stderr.write(`smt_stdio: ${String(err)}\n`);
  process.exit(1);
});
