import { ApiClient, SchemaInfo } from "./api.js";
import { SessionController } from "./controller.js";
import { renderSchemaPanel, renderSession } from "./view.js";

const api = new ApiClient("");
const controller = new SessionController(api);

const dbSelect = document.getElementById("db-select") as HTMLSelectElement;
const questionInput = document.getElementById("question-input") as HTMLTextAreaElement;
const askButton = document.getElementById("ask-button") as HTMLButtonElement;
const sessionRoot = document.getElementById("session") as HTMLElement;
const schemaRoot = document.getElementById("schema-panel") as HTMLElement;
const formError = document.getElementById("form-error") as HTMLElement;

let schemas: SchemaInfo[] = [];

async function loadSchemas() {
  try {
    schemas = (await api.schemas()).schemas;
    dbSelect.replaceChildren(
      ...schemas.map((schema) => {
        const option = document.createElement("option");
        option.value = schema.db_id;
        option.textContent = schema.db_id;
        return option;
      }),
    );
    renderSchemaPanel(schemaRoot, schemas, dbSelect.value);
  } catch (err) {
    formError.textContent = `cannot reach the service: ${String(err)}`;
  }
}

dbSelect.addEventListener("change", () => renderSchemaPanel(schemaRoot, schemas, dbSelect.value));

askButton.addEventListener("click", () => {
  const question = questionInput.value.trim();
  formError.textContent = "";
  if (!question) {
    formError.textContent = "type a question first";
    return;
  }
  void controller.start(question, dbSelect.value);
});

controller.subscribe((state) => {
  askButton.disabled = state.phase === "starting" || state.phase === "asking";
  renderSession(sessionRoot, state, controller);
});

void loadSchemas();
