import './styles.css'
import { AnnotationApi } from './api'
import { installKeyboard } from './keyboard'
import { CodingStore } from './state'
import type { ReliabilityReport } from './types'
import {
  renderReliability,
  renderRubricPanel,
  renderUtterancePanel,
} from './view'

const SERVICE_URL =
  new URLSearchParams(location.search).get('service') ?? 'http://127.0.0.1:8577'

const api = new AnnotationApi(SERVICE_URL)
const store = new CodingStore(api)

const root = document.getElementById('app')!
let reliability: ReliabilityReport | null = null

function renderHeader(): HTMLElement {
  const state = store.snapshot()
  const header = document.createElement('header')
  header.className = 'toolbar'

  const coder = document.createElement('input')
  coder.placeholder = 'coder id'
  coder.value = state.coder
  coder.id = 'coder-input'
  coder.addEventListener('change', () => store.setCoder(coder.value))

  const sessions = document.createElement('select')
  sessions.id = 'session-select'
  const placeholder = document.createElement('option')
  placeholder.textContent = 'pick a session'
  placeholder.value = ''
  sessions.append(placeholder)
  for (const s of state.sessions) {
    const option = document.createElement('option')
    option.value = s.session_id
    option.textContent = `${s.session_id} (${s.n_coded}/${s.n_utterances} coded)`
    option.selected = s.session_id === state.sessionId
    sessions.append(option)
  }
  sessions.addEventListener('change', () => {
    if (sessions.value) void store.openSession(sessions.value)
  })

  const review = document.createElement('label')
  review.className = 'review-toggle'
  const box = document.createElement('input')
  box.type = 'checkbox'
  box.checked = state.reviewMode
  box.addEventListener('change', () => store.setReviewMode(box.checked))
  review.append(box, document.createTextNode(' review mode (show outcomes)'))

  const refresh = document.createElement('button')
  refresh.textContent = 'refresh reliability'
  refresh.addEventListener('click', () => void refreshReliability())

  header.append(coder, sessions, review, refresh)
  return header
}

async function refreshReliability(): Promise<void> {
  try {
    reliability = await api.reliability()
  } catch (err) {
    reliability = {
      status: `unreachable: ${String(err)}`,
      coders: null,
      n_items: 0,
      categories: {},
    }
  }
  render()
}

function render(): void {
  const state = store.snapshot()
  root.replaceChildren(
    renderHeader(),
    renderUtterancePanel(state),
    renderReliability(reliability),
    renderRubricPanel(),
  )
  root.querySelectorAll<HTMLButtonElement>('.code-button').forEach((button) => {
    button.addEventListener('click', () => {
      store.toggle(button.dataset.category as never)
    })
  })
  const retry = root.querySelector<HTMLButtonElement>('[data-action="retry"]')
  retry?.addEventListener('click', () => void store.save())
}

store.subscribe(render)
installKeyboard(store, window)
render()
void store.loadSessions()
