// DOM rendering. Renders only the controller's confirmed state; all SQL and
// question strings are inserted as text nodes, verbatim.

import { OptionView, SchemaInfo } from "./api.js";
import { ControllerState, SessionController, diffWords } from "./controller.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderSchemaPanel(root: HTMLElement, schemas: SchemaInfo[], selected: string) {
  root.replaceChildren();
  const schema = schemas.find((s) => s.db_id === selected);
  if (!schema) return;
  root.append(el("h3", "panel-title", `database: ${schema.db_id}`));
  for (const table of schema.tables) {
    const box = el("div", "schema-table");
    box.append(el("div", "schema-table-name", table.name));
    const list = el("ul", "schema-columns");
    for (const column of table.columns) {
      const item = el("li", "schema-column", column.name);
      item.append(el("span", "schema-type", ` ${column.type}`));
      list.append(item);
    }
    box.append(list);
    root.append(box);
  }
}

export function renderSession(
  root: HTMLElement,
  state: ControllerState,
  controller: SessionController,
) {
  root.replaceChildren();
  if (state.phase === "idle") return;
  if (state.phase === "starting") {
    root.append(el("div", "status", "parsing your question..."));
    return;
  }
  if (state.phase === "error" && state.error) {
    const banner = el("div", "error-banner");
    banner.append(el("div", "error-message", `${state.error.code}: ${state.error.message}`));
    if (state.error.retryable) {
      const retryButton = el("button", "retry", "retry");
      retryButton.addEventListener("click", () => void controller.retry());
      banner.append(retryButton);
    }
    root.append(banner);
    return;
  }
  const view = state.view;
  if (!view) return;

  const sqlPanel = el("section", "panel");
  sqlPanel.append(el("h3", "panel-title", "first prediction"));
  sqlPanel.append(el("pre", "sql", view.sql_before));
  root.append(sqlPanel);

  if (view.answers.length > 0) {
    const answered = el("section", "panel answered");
    answered.append(el("h3", "panel-title", "your answers"));
    const list = el("ul");
    for (const answer of view.answers) {
      list.append(el("li", undefined, `'${answer.token}' → ${answer.surface} (${answer.kind})`));
    }
    answered.append(list);
    root.append(answered);
  }

  if (state.phase === "asking" && view.current_question) {
    const q = view.current_question;
    const card = el("section", "panel question-card");
    card.append(
      el("div", "progress", `question ${view.progress.answered + 1} of ${view.progress.total}`),
    );
    card.append(el("h2", "prompt", q.prompt));
    const options = el("div", "options");
    q.options.forEach((option: OptionView, index: number) => {
      const button = el("button", `option option-${option.kind}`, option.surface);
      button.append(el("span", "option-kind", option.kind));
      button.addEventListener("click", () => void controller.answer(index));
      options.append(button);
    });
    card.append(options);
    root.append(card);
    return;
  }

  // finalized
  const final = el("section", "panel final");
  final.append(el("h3", "panel-title", "rewritten question"));
  final.append(el("p", "modified-question", view.modified_question ?? view.question));
  const diffBox = el("p", "diff");
  for (const span of diffWords(view.question, view.modified_question ?? view.question)) {
    diffBox.append(el("span", `diff-${span.kind}`, span.text + " "));
  }
  final.append(diffBox);
  final.append(el("h3", "panel-title", "repaired SQL"));
  final.append(el("pre", "sql", view.sql_after ?? view.sql_before));
  const again = el("button", "restart", "ask another question");
  again.addEventListener("click", () => controller.reset());
  final.append(again);
  root.append(final);
}
